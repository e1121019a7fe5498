//! Versioned prompt templates with `{{placeholder}}` substitution.
//!
//! The built-in templates live in `prompts/*.txt` and are compiled in. A
//! directory with the same file names can override any of them. The first
//! line of each file, `# template: <name> v<n>`, is a version header and is
//! not sent to the model.

use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    header: String,
    body: String,
}

impl Template {
    pub fn parse(text: &str) -> Self {
        match text.split_once('\n') {
            Some((first, rest)) if first.starts_with("# template:") => Self {
                header: first.trim_start_matches("# template:").trim().to_string(),
                body: rest.to_string(),
            },
            _ => Self {
                header: String::new(),
                body: text.to_string(),
            },
        }
    }

    /// `"<name> v<n>"`, or empty when the file has no header.
    pub fn version(&self) -> &str {
        &self.header
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.body.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{{{k}}}}}"), v);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub classify: Template,
    pub clauses: Template,
    pub extract: Template,
    pub rewrite: Template,
    pub keywords: Template,
    pub fields: Template,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            classify: Template::parse(include_str!("../../prompts/classify.txt")),
            clauses: Template::parse(include_str!("../../prompts/clauses.txt")),
            extract: Template::parse(include_str!("../../prompts/extract.txt")),
            rewrite: Template::parse(include_str!("../../prompts/rewrite.txt")),
            keywords: Template::parse(include_str!("../../prompts/keywords.txt")),
            fields: Template::parse(include_str!("../../prompts/fields.txt")),
        }
    }
}

impl Prompts {
    /// Built-in templates, overridden by any `<name>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut p = Self::default();
        for (name, slot) in [
            ("classify", &mut p.classify),
            ("clauses", &mut p.clauses),
            ("extract", &mut p.extract),
            ("rewrite", &mut p.rewrite),
            ("keywords", &mut p.keywords),
            ("fields", &mut p.fields),
        ] {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                *slot = Template::parse(&std::fs::read_to_string(path)?);
            }
        }
        Ok(p)
    }
}
