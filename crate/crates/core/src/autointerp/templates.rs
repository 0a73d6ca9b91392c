//! Versioned prompt templates with `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const TEMPLATE_VERSION: &str = "v1";

const NAMES: [&str; 9] = [
    "explainer_system",
    "explainer_user",
    "explainer_example",
    "activation_item",
    "scorer_system",
    "scorer_user",
    "scorer_example",
    "scorer_reprompt",
    "case_generation",
];

#[derive(Deserialize)]
struct Manifest {
    format: String,
    version: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub version: String,
    texts: BTreeMap<String, String>,
}

macro_rules! shipped_file {
    ($name:literal) => {
        ($name, include_str!(concat!("../../assets/prompts/v1/", $name, ".txt")))
    };
}

impl PromptTemplates {
    /// The templates bundled with the library.
    pub fn shipped() -> Self {
        let files = [
            shipped_file!("explainer_system"),
            shipped_file!("explainer_user"),
            shipped_file!("explainer_example"),
            shipped_file!("activation_item"),
            shipped_file!("scorer_system"),
            shipped_file!("scorer_user"),
            shipped_file!("scorer_example"),
            shipped_file!("scorer_reprompt"),
            shipped_file!("case_generation"),
        ];
        Self {
            version: TEMPLATE_VERSION.into(),
            texts: files.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
        }
    }

    /// Loads a template directory and checks that its version is `expected`.
    pub fn load(dir: &Path, expected: &str) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != "expertscope-prompts/1" {
            return Err(Error::Template(format!("unknown template format `{}`", manifest.format)));
        }
        if manifest.version != expected {
            return Err(Error::Template(format!(
                "template version `{}` does not match expected `{expected}`",
                manifest.version
            )));
        }
        let mut texts = BTreeMap::new();
        for name in NAMES {
            let p = dir.join(format!("{name}.txt"));
            texts.insert(name.to_string(), std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?);
        }
        Ok(Self {
            version: manifest.version,
            texts,
        })
    }

    /// Renders template `name`. Every placeholder must be bound and every
    /// binding must be used.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String> {
        let template = self
            .texts
            .get(name)
            .ok_or_else(|| Error::Template(format!("no template named `{name}`")))?;
        render(template, vars).map_err(|e| Error::Template(format!("{name}: {e}")))
    }
}

fn render(template: &str, vars: &[(&str, &str)]) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(template.len());
    let mut used = vec![false; vars.len()];
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or("unclosed placeholder")?;
        let key = &after[..close];
        let i = vars
            .iter()
            .position(|(k, _)| *k == key)
            .ok_or_else(|| format!("unbound placeholder `{key}`"))?;
        used[i] = true;
        out.push_str(vars[i].1);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(format!("unused binding `{}`", vars[i].0));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholders_are_checked() {
        assert_eq!(render("a {{x}} b", &[("x", "1")]).unwrap(), "a 1 b");
        assert!(render("a {{x}}", &[]).is_err());
        assert!(render("a", &[("x", "1")]).is_err());
        assert!(render("a {{x", &[("x", "1")]).is_err());
    }

    #[test]
    fn values_are_not_reexpanded() {
        assert_eq!(render("{{x}}", &[("x", "{{y}}")]).unwrap(), "{{y}}");
    }

    #[test]
    fn version_mismatch_is_a_template_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("manifest.json"),
            r#"{"format": "expertscope-prompts/1", "version": "v0"}"#,
        )
        .unwrap();
        assert!(matches!(PromptTemplates::load(dir.path(), "v1"), Err(Error::Template(_))));
    }

    #[test]
    fn shipped_directory_matches_embedded_copy() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/prompts/v1");
        assert_eq!(PromptTemplates::load(&dir, "v1").unwrap(), PromptTemplates::shipped());
    }
}
