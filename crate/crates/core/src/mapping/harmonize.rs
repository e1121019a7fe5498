use std::collections::BTreeMap;

use serde_json::Value;

use super::{ChartSpec, FieldScale};
use crate::analysis::{json_payload, Prompts};
use crate::gateway::{Gateway, GenerationRequest};
use crate::model::DataTable;

/// Categorical palette, assigned to field groups in first-appearance order.
pub const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// Groups of quantitative fields that should share one axis range.
pub type FieldGroups = Vec<Vec<String>>;

pub(crate) fn padded_domain(values: impl Iterator<Item = f64>) -> Option<[f64; 2]> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return None;
    }
    let range = hi - lo;
    let pad = if range > 0.0 {
        0.05 * range
    } else if lo != 0.0 {
        0.05 * lo.abs()
    } else {
        1.0
    };
    Some([lo - pad, hi + pad])
}

fn hex_to_rgb(hex: &str) -> Option<[f64; 3]> {
    let h = hex.strip_prefix('#')?;
    if h.len() != 6 {
        return None;
    }
    let c = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).ok().map(|v| v as f64 / 255.0);
    Some([c(0)?, c(2)?, c(4)?])
}

fn rgb_to_hsl([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let l = (max + min) / 2.0;
    if max == min {
        return [0.0, 0.0, l];
    }
    let d = max - min;
    let s = if l > 0.5 {
        d / (2.0 - max - min)
    } else {
        d / (max + min)
    };
    let h = if max == r {
        (g - b) / d + if g < b { 6.0 } else { 0.0 }
    } else if max == g {
        (b - r) / d + 2.0
    } else {
        (r - g) / d + 4.0
    };
    [h / 6.0, s, l]
}

fn hsl_to_rgb([h, s, l]: [f64; 3]) -> [f64; 3] {
    if s == 0.0 {
        return [l, l, l];
    }
    let q = if l < 0.5 { l * (1.0 + s) } else { l + s - l * s };
    let p = 2.0 * l - q;
    let hue = |mut t: f64| {
        if t < 0.0 {
            t += 1.0;
        }
        if t > 1.0 {
            t -= 1.0;
        }
        if t < 1.0 / 6.0 {
            p + (q - p) * 6.0 * t
        } else if t < 0.5 {
            q
        } else if t < 2.0 / 3.0 {
            p + (q - p) * (2.0 / 3.0 - t) * 6.0
        } else {
            p
        }
    };
    [hue(h + 1.0 / 3.0), hue(h), hue(h - 1.0 / 3.0)]
}

/// The `index`-th of `count` shades of `base` (darkest first). A single
/// shade is `base` itself.
pub fn shade(base: &str, index: usize, count: usize) -> String {
    if count <= 1 {
        return base.to_string();
    }
    let Some(rgb) = hex_to_rgb(base) else {
        return base.to_string();
    };
    let [h, s, _] = rgb_to_hsl(rgb);
    let l = 0.30 + 0.45 * index as f64 / (count - 1) as f64;
    let [r, g, b] = hsl_to_rgb([h, s, l]);
    let byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    format!("#{:02x}{:02x}{:02x}", byte(r), byte(g), byte(b))
}

/// Reads a JSON array of field-name arrays (bare or under `"groups"`).
/// Unknown names are dropped and each field joins only its first group.
pub fn parse_groups(reply: &str, fields: &[String]) -> Option<FieldGroups> {
    let v = json_payload(reply)?;
    let arr = match &v {
        Value::Array(a) => a,
        Value::Object(o) => o.get("groups")?.as_array()?,
        _ => return None,
    };
    let mut taken = std::collections::HashSet::new();
    let mut out = Vec::new();
    for g in arr {
        let members: Vec<String> = g
            .as_array()?
            .iter()
            .filter_map(Value::as_str)
            .filter(|f| fields.iter().any(|k| k == f))
            .filter(|f| taken.insert(f.to_string()))
            .map(str::to_string)
            .collect();
        if !members.is_empty() {
            out.push(members);
        }
    }
    Some(out)
}

/// Asks the model which fields are comparable. Any failure leaves every
/// field in its own group.
pub fn comparable_groups(gw: &Gateway, prompts: &Prompts, fields: &[String], temperature: f64) -> FieldGroups {
    if fields.len() < 2 {
        return fields.iter().map(|f| vec![f.clone()]).collect();
    }
    let listing: Vec<String> = fields.iter().map(|f| format!("- {f}")).collect();
    let prompt = prompts.fields.render(&[("fields", &listing.join("\n"))]);
    let reply = gw.generate(&GenerationRequest::new(prompt).temperature(temperature));
    match reply.as_deref().map(|r| parse_groups(r, fields)) {
        Ok(Some(groups)) => groups,
        Ok(None) => {
            log::warn!("unreadable field grouping reply; matching fields by name only");
            Vec::new()
        }
        Err(e) => {
            log::warn!("field grouping failed ({e}); matching fields by name only");
            Vec::new()
        }
    }
}

fn visit(sets: &[Vec<ChartSpec>]) -> impl Iterator<Item = &ChartSpec> {
    sets.iter().flatten().flat_map(|c| c.parts())
}

/// Gives every field one scale everywhere: quantitative fields share the
/// padded domain of their group and a shade of the group's hue, dimension
/// fields share the table's category order. Marks and data scopes are left
/// alone.
pub fn harmonize(sets: &[Vec<ChartSpec>], groups: &FieldGroups, table: &DataTable) -> Vec<Vec<ChartSpec>> {
    let mut measures: Vec<&str> = Vec::new();
    for c in visit(sets) {
        for m in &c.measures {
            if !measures.contains(&m.as_str()) {
                measures.push(m);
            }
        }
    }
    // Partition in first-appearance order; fields outside any group stand alone.
    let mut partition: Vec<Vec<&str>> = Vec::new();
    for &m in &measures {
        if partition.iter().any(|g| g.contains(&m)) {
            continue;
        }
        let group = groups.iter().find(|g| g.iter().any(|f| f == m));
        let members = match group {
            Some(g) => measures.iter().copied().filter(|f| g.iter().any(|x| x == f)).collect(),
            None => vec![m],
        };
        partition.push(members);
    }
    let mut scales: BTreeMap<String, FieldScale> = BTreeMap::new();
    for (k, members) in partition.iter().enumerate() {
        let values = members
            .iter()
            .flat_map(|m| table.numbers(m, 0..table.row_count()).collect::<Vec<_>>());
        let domain = padded_domain(values);
        let base = PALETTE[k % PALETTE.len()];
        for (j, m) in members.iter().enumerate() {
            scales.insert(
                m.to_string(),
                FieldScale {
                    domain,
                    order: None,
                    color: Some(shade(base, j, members.len())),
                },
            );
        }
    }
    let apply = |c: &mut ChartSpec, scales: &mut BTreeMap<String, FieldScale>| {
        let mut own = BTreeMap::new();
        for f in c.fields() {
            let s = scales.entry(f.to_string()).or_insert_with(|| FieldScale {
                domain: None,
                order: Some(table.distinct_values(f)),
                color: None,
            });
            own.insert(f.to_string(), s.clone());
        }
        c.scales = own;
    };
    sets.iter()
        .map(|set| {
            set.iter()
                .map(|c| {
                    let mut c = c.clone();
                    apply(&mut c, &mut scales);
                    if let Some(p) = c.pair.as_mut() {
                        apply(&mut p.chart, &mut scales);
                    }
                    c
                })
                .collect()
        })
        .collect()
}
