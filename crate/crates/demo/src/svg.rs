//! Small SVG renderer for chart specs. Good enough to see what a frame
//! shows; the storyboard's Vega-Lite documents remain the real output.

use std::fmt::Write;

use narrative_player::mapping::{Channel, ChartSpec, Mark, PALETTE};
use narrative_player::model::{filter_rows, DataTable};

pub const WIDTH: f64 = 380.0;
pub const HEIGHT: f64 = 230.0;
const LEFT: f64 = 46.0;
const RIGHT: f64 = 12.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 34.0;

struct Datum {
    cat: String,
    series: String,
    value: f64,
    hot: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn text_of(table: &DataTable, col: &str, row: usize) -> String {
    table
        .column_index(col)
        .and_then(|i| table.cell(row, i).key())
        .unwrap_or_default()
}

fn row_label(table: &DataTable, row: usize) -> String {
    table
        .columns()
        .iter()
        .find(|c| c.kind.is_dimension())
        .map(|c| text_of(table, &c.name, row))
        .unwrap_or_else(|| format!("#{row}"))
}

fn folded(spec: &ChartSpec) -> bool {
    [&spec.x, &spec.y, &spec.color]
        .into_iter()
        .flatten()
        .any(|c| matches!(c, Channel::MeasureName | Channel::MeasureValue))
}

/// One datum per (row, measure) the chart plots.
fn collect(spec: &ChartSpec, table: &DataTable) -> Vec<Datum> {
    let rows = filter_rows(&spec.data_scope, table).unwrap_or_default();
    let hot = spec.emphasis_rows(table).unwrap_or_default();
    let measures: Vec<&String> = if folded(spec) {
        spec.measures.iter().collect()
    } else {
        match (&spec.mark, &spec.y, &spec.x) {
            (Mark::Tick, _, Some(Channel::Field(m))) => vec![m],
            (_, Some(Channel::Field(m)), _) => vec![m],
            _ => spec.measures.iter().take(1).collect(),
        }
    };
    let resolve = |ch: &Option<Channel>, row: usize, m: &str, fallback: &dyn Fn() -> String| match ch {
        Some(Channel::Field(f)) if !spec.measures.contains(f) => text_of(table, f, row),
        Some(Channel::MeasureName) => m.to_string(),
        _ => fallback(),
    };
    let mut out = Vec::new();
    for &r in &rows {
        for m in &measures {
            let Some(value) = table.column_index(m).and_then(|i| table.cell(r, i).as_f64()) else {
                continue;
            };
            let (cat_ch, series_ch) = if spec.mark == Mark::Tick {
                (&spec.y, &spec.color)
            } else {
                (&spec.x, &spec.color)
            };
            // Measure names already on x: group the bars by row instead.
            let series = if spec.x == Some(Channel::MeasureName) && rows.len() > 1 {
                row_label(table, r)
            } else {
                resolve(series_ch, r, m, &String::new)
            };
            out.push(Datum {
                cat: resolve(cat_ch, r, m, &|| {
                    if spec.mark == Mark::Tick {
                        String::new()
                    } else {
                        row_label(table, r)
                    }
                }),
                series,
                value,
                hot: spec.emphasis.is_empty() || hot.contains(&r),
            });
        }
    }
    out
}

fn distinct(items: impl Iterator<Item = String>, order: Option<&Vec<String>>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if let Some(order) = order {
        out.sort_by_key(|s| order.iter().position(|o| o == s).unwrap_or(usize::MAX));
    }
    out
}

fn series_color(spec: &ChartSpec, name: &str, idx: usize) -> String {
    spec.scales
        .get(name)
        .and_then(|s| s.color.clone())
        .or_else(|| {
            spec.measures
                .iter()
                .find_map(|m| spec.scales.get(m)?.color.clone())
                .filter(|_| name.is_empty())
        })
        .unwrap_or_else(|| PALETTE[idx % PALETTE.len()].to_string())
}

fn value_domain(spec: &ChartSpec, data: &[Datum], stacked_max: Option<f64>) -> [f64; 2] {
    if let Some(max) = stacked_max {
        return [0.0, max.max(1e-9)];
    }
    let from_scales = spec
        .measures
        .iter()
        .filter_map(|m| spec.scales.get(m)?.domain)
        .reduce(|a, b| [a[0].min(b[0]), a[1].max(b[1])]);
    from_scales.unwrap_or_else(|| {
        let lo = data.iter().map(|d| d.value).fold(f64::INFINITY, f64::min).min(0.0);
        let hi = data
            .iter()
            .map(|d| d.value)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(lo + 1.0);
        [lo, hi]
    })
}

fn short(label: &str, room: f64) -> String {
    let max = ((room / 6.0) as usize).max(3);
    label.chars().take(max).collect()
}

/// Draws one single chart (no pair) into `out`, offset vertically by `dy`.
/// Without `marks` only the title, axes and labels are drawn.
fn draw_part(out: &mut String, spec: &ChartSpec, table: &DataTable, dy: f64, marks: bool) {
    let data = if marks { collect(spec, table) } else { Vec::new() };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let (x0, y0) = (LEFT, dy + TOP);
    let title = if spec.title.chars().count() > 58 {
        format!("{}…", spec.title.chars().take(57).collect::<String>())
    } else {
        spec.title.clone()
    };
    let _ = write!(
        out,
        r#"<text x="{LEFT}" y="{}" class="title">{}</text>"#,
        dy + 16.0,
        escape(&title)
    );

    let axis_field = match if spec.mark == Mark::Tick { &spec.y } else { &spec.x } {
        Some(Channel::Field(f)) => Some(f.as_str()),
        _ => None,
    };
    let cats = distinct(
        data.iter().map(|d| d.cat.clone()),
        axis_field.and_then(|f| spec.scales.get(f)?.order.as_ref()),
    );
    let color_field = match &spec.color {
        Some(Channel::Field(f)) => Some(f.as_str()),
        _ => None,
    };
    let series = distinct(
        data.iter().map(|d| d.series.clone()),
        color_field.and_then(|f| spec.scales.get(f)?.order.as_ref()),
    );
    let cat_i = |c: &str| cats.iter().position(|x| x == c).unwrap_or(0);
    let ser_i = |s: &str| series.iter().position(|x| x == s).unwrap_or(0);

    let stacked_max = (spec.mark == Mark::StackedBar).then(|| {
        cats.iter()
            .map(|c| {
                data.iter()
                    .filter(|d| &d.cat == c)
                    .map(|d| d.value.max(0.0))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    });
    let [lo, hi] = value_domain(spec, &data, stacked_max);
    let scale_v = |v: f64, len: f64| (v - lo) / (hi - lo) * len;
    let opacity = |hot: bool| if hot { 1.0 } else { 0.3 };

    let _ = write!(
        out,
        r#"<line x1="{x0}" y1="{y1}" x2="{x0}" y2="{y0}" class="axis"/><line x1="{x0}" y1="{y1}" x2="{x2}" y2="{y1}" class="axis"/>"#,
        y1 = y0 + plot_h,
        x2 = x0 + plot_w
    );

    match spec.mark {
        Mark::Point => {
            let (Some(Channel::Field(mx)), Some(Channel::Field(my))) = (&spec.x, &spec.y) else {
                return;
            };
            let rows = filter_rows(&spec.data_scope, table).unwrap_or_default();
            let hot = spec.emphasis_rows(table).unwrap_or_default();
            let get = |m: &str, r: usize| table.column_index(m).and_then(|i| table.cell(r, i).as_f64());
            let dom = |m: &str| {
                spec.scales.get(m).and_then(|s| s.domain).unwrap_or_else(|| {
                    let vals: Vec<f64> = rows.iter().filter_map(|&r| get(m, r)).collect();
                    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    [lo - 1.0, hi + 1.0]
                })
            };
            let ([xl, xh], [yl, yh]) = (dom(mx), dom(my));
            for &r in &rows {
                let (true, Some(a), Some(b)) = (marks, get(mx, r), get(my, r)) else {
                    continue;
                };
                let cx = x0 + (a - xl) / (xh - xl) * plot_w;
                let cy = y0 + plot_h - (b - yl) / (yh - yl) * plot_h;
                let h = spec.emphasis.is_empty() || hot.contains(&r);
                let _ = write!(
                    out,
                    r#"<circle cx="{cx:.1}" cy="{cy:.1}" r="4" fill="{}" opacity="{}"/>"#,
                    series_color(spec, "", 0),
                    opacity(h)
                );
            }
            let _ = write!(
                out,
                r#"<text x="{}" y="{}" class="label" text-anchor="end">{}</text>"#,
                x0 + plot_w,
                y0 + plot_h + 26.0,
                escape(mx)
            );
            let _ = write!(
                out,
                r#"<text x="4" y="{}" class="label">{}</text>"#,
                y0 - 4.0,
                escape(my)
            );
        }
        Mark::Tick => {
            let band = plot_h / cats.len().max(1) as f64;
            for d in &data {
                let x = x0 + scale_v(d.value, plot_w);
                let y = y0 + band * cat_i(&d.cat) as f64;
                let _ = write!(
                    out,
                    r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="{}" stroke-width="2" opacity="{}"/>"#,
                    y + band * 0.2,
                    y + band * 0.8,
                    series_color(spec, &d.series, ser_i(&d.series)),
                    opacity(d.hot)
                );
            }
            for (i, c) in cats.iter().enumerate() {
                let _ = write!(
                    out,
                    r#"<text x="4" y="{:.1}" class="label">{}</text>"#,
                    y0 + band * (i as f64 + 0.55),
                    escape(&short(c, LEFT))
                );
            }
        }
        Mark::Line | Mark::MultiLine => {
            let step = plot_w / cats.len().max(1) as f64;
            for (si, s) in series.iter().enumerate() {
                let mut pts: Vec<(usize, f64, bool)> = data
                    .iter()
                    .filter(|d| &d.series == s)
                    .map(|d| (cat_i(&d.cat), d.value, d.hot))
                    .collect();
                pts.sort_by_key(|p| p.0);
                let color = series_color(spec, s, si);
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(c, v, _)| {
                        format!(
                            "{:.1},{:.1}",
                            x0 + step * (c as f64 + 0.5),
                            y0 + plot_h - scale_v(v, plot_h)
                        )
                    })
                    .collect();
                let _ = write!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                    path.join(" ")
                );
                for &(c, v, h) in &pts {
                    if h && !spec.emphasis.is_empty() {
                        let _ = write!(
                            out,
                            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{color}" class="focus"/>"#,
                            x0 + step * (c as f64 + 0.5),
                            y0 + plot_h - scale_v(v, plot_h)
                        );
                    }
                }
            }
            category_labels(out, &cats, x0, y0 + plot_h, step);
        }
        Mark::Bar | Mark::GroupedBar | Mark::StackedBar => {
            let step = plot_w / cats.len().max(1) as f64;
            let base = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo };
            let mut stack = vec![0.0; cats.len()];
            let grouped = spec.mark != Mark::StackedBar && series.len() > 1;
            let bar_w = if grouped {
                step * 0.8 / series.len() as f64
            } else {
                step * 0.8
            };
            for d in &data {
                let (c, s) = (cat_i(&d.cat), ser_i(&d.series));
                let (from, to) = if spec.mark == Mark::StackedBar {
                    let from = stack[c];
                    stack[c] += d.value.max(0.0);
                    (from, stack[c])
                } else {
                    (base, d.value)
                };
                let (a, b) = (scale_v(from, plot_h), scale_v(to, plot_h));
                let x = x0 + step * c as f64 + step * 0.1 + if grouped { bar_w * s as f64 } else { 0.0 };
                let _ = write!(
                    out,
                    r#"<rect x="{x:.1}" y="{:.1}" width="{bar_w:.1}" height="{:.1}" fill="{}" opacity="{}"/>"#,
                    y0 + plot_h - a.max(b),
                    (b - a).abs().max(0.5),
                    if spec.x == Some(Channel::MeasureName) {
                        series_color(spec, &d.cat, c)
                    } else {
                        series_color(spec, &d.series, s)
                    },
                    opacity(d.hot)
                );
            }
            category_labels(out, &cats, x0, y0 + plot_h, step);
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" class="label" text-anchor="end">{}</text>"#,
        LEFT - 4.0,
        y0 + 8.0,
        fmt(hi)
    );
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" class="label" text-anchor="end">{}</text>"#,
        LEFT - 4.0,
        y0 + plot_h,
        fmt(lo)
    );
}

fn fmt(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn category_labels(out: &mut String, cats: &[String], x0: f64, y: f64, step: f64) {
    for (i, c) in cats.iter().enumerate() {
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" class="label" text-anchor="middle">{}</text>"#,
            x0 + step * (i as f64 + 0.5),
            y + 14.0,
            escape(&short(c, step))
        );
    }
}

/// A complete `<svg>` document for a chart and its side-by-side partner.
pub fn render(spec: &ChartSpec, table: &DataTable) -> String {
    render_with(spec, table, true)
}

/// Like [`render`]; with `marks` false only titles and axes are drawn,
/// which is how skeleton frames look.
pub fn render_with(spec: &ChartSpec, table: &DataTable, marks: bool) -> String {
    let parts = spec.parts();
    let height = HEIGHT * parts.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}"><style>.title{{font:bold 12px sans-serif}}.label{{font:10px sans-serif;fill:#444}}.axis{{stroke:#888}}.focus{{stroke:#222;stroke-width:1.5}}</style>"#
    );
    for (i, part) in parts.into_iter().enumerate() {
        draw_part(&mut out, part, table, HEIGHT * i as f64, marks);
    }
    out.push_str("</svg>");
    out
}
