//! Multi-view prompt construction from item metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::ItemMetadata;
use crate::error::{Error, Result};
use crate::jsonl;

pub const PLACEHOLDER: &str = "{}";
pub const GLOBAL_VIEW: &str = "global";
pub const GLOBAL_SEPARATOR: &str = "; ";
pub const DEFAULT_MAX_CHARS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub view_name: String,
    pub template: String,
}

impl PromptTemplate {
    pub fn new(view_name: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let t = Self {
            view_name: view_name.into(),
            template: template.into(),
        };
        t.check()?;
        Ok(t)
    }

    fn check(&self) -> Result<()> {
        let slots = self.template.matches(PLACEHOLDER).count();
        if slots != 1 {
            return Err(Error::Template {
                view: self.view_name.clone(),
                msg: format!("expected exactly one {PLACEHOLDER} slot, found {slots}"),
            });
        }
        Ok(())
    }

    pub fn fill(&self, value: &str) -> String {
        self.template.replacen(PLACEHOLDER, value, 1)
    }
}

/// Ordered field templates plus an optional global-view template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    views: Vec<PromptTemplate>,
    global: Option<PromptTemplate>,
}

impl TemplateSet {
    pub fn new(views: Vec<PromptTemplate>, global: Option<PromptTemplate>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::param("template set has no views"));
        }
        let mut names = std::collections::HashSet::new();
        for t in views.iter().chain(global.iter()) {
            t.check()?;
            if !names.insert(t.view_name.as_str()) {
                return Err(Error::Template {
                    view: t.view_name.clone(),
                    msg: "duplicate view name".into(),
                });
            }
        }
        Ok(Self { views, global })
    }

    /// Title, brand, categories and description templates plus the global view.
    pub fn standard() -> Self {
        let t = |v: &str, s: &str| PromptTemplate {
            view_name: v.into(),
            template: s.into(),
        };
        Self {
            views: vec![
                t("title", "The product title is {}."),
                t("brand", "The product brand is {}."),
                t("categories", "The product categories are {}."),
                t("description", "The product description is {}."),
            ],
            global: Some(t(GLOBAL_VIEW, "The product descriptions are {}")),
        }
    }

    /// Loads `{view_name, template}` records; a record named `global` becomes the global template.
    pub fn from_file(path: &Path) -> Result<Self> {
        let records: Vec<PromptTemplate> = jsonl::read_records(path)?;
        let (global, views): (Vec<_>, Vec<_>) =
            records.into_iter().partition(|t| t.view_name == GLOBAL_VIEW);
        Self::new(views, global.into_iter().next())
    }

    pub fn views(&self) -> &[PromptTemplate] {
        &self.views
    }

    pub fn global(&self) -> Option<&PromptTemplate> {
        self.global.as_ref()
    }

    /// View names in prompt order; the global view is last when enabled.
    pub fn view_names(&self, include_global: bool) -> Vec<String> {
        let mut names: Vec<String> = self.views.iter().map(|t| t.view_name.clone()).collect();
        if include_global {
            names.push(
                self.global
                    .as_ref()
                    .map_or(GLOBAL_VIEW.to_string(), |g| g.view_name.clone()),
            );
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemViews {
    pub item: usize,
    pub prompts: Vec<(String, String)>,
    pub image_ref: Option<PathBuf>,
}

/// Fills each template with its field value. Missing or empty fields leave an empty slot
/// so that every item yields the same number of views.
pub fn build_views(
    item: usize,
    meta: &ItemMetadata,
    templates: &TemplateSet,
    include_global: bool,
) -> Result<ItemViews> {
    let mut prompts = Vec::with_capacity(templates.views.len() + 1);
    let mut values = Vec::with_capacity(templates.views.len());
    for t in &templates.views {
        t.check()?;
        let value = meta.field(&t.view_name).unwrap_or("");
        prompts.push((t.view_name.clone(), t.fill(value)));
        values.push(value);
    }
    if include_global {
        let global = templates.global.clone().unwrap_or_else(|| {
            TemplateSet::standard()
                .global
                .expect("standard set has a global view")
        });
        global.check()?;
        prompts.push((global.view_name.clone(), global.fill(&values.join(GLOBAL_SEPARATOR))));
    }
    Ok(ItemViews {
        item,
        prompts,
        image_ref: meta.image_ref.clone(),
    })
}

/// Caps a prompt at `max_chars` characters, preferring the last whitespace boundary.
pub fn soft_truncate(prompt: &str, max_chars: usize) -> String {
    let max_chars = max_chars.max(1);
    let chars: Vec<char> = prompt.chars().collect();
    if chars.len() <= max_chars {
        return prompt.to_string();
    }
    // A boundary at index `max_chars` means the prefix ends exactly on a word.
    let boundary = (1..=max_chars).rev().find(|&p| chars[p].is_whitespace());
    if let Some(p) = boundary {
        let cut: String = chars[..p].iter().collect();
        let cut = cut.trim_end();
        if !cut.is_empty() {
            return cut.to_string();
        }
    }
    chars[..max_chars].iter().collect()
}

/// Record of the prompt dump consumed by the encoder bridge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub item_id: String,
    pub view_name: String,
    pub view_index: usize,
    pub prompt: String,
    pub image_path: Option<String>,
}

pub fn prompt_records(item_id: &str, views: &ItemViews, max_chars: usize) -> Vec<PromptRecord> {
    views
        .prompts
        .iter()
        .enumerate()
        .map(|(j, (name, prompt))| PromptRecord {
            item_id: item_id.to_string(),
            view_name: name.clone(),
            view_index: j,
            prompt: soft_truncate(prompt, max_chars),
            image_path: views
                .image_ref
                .as_ref()
                .map(|p| p.to_string_lossy().into_owned()),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta(fields: &[(&str, &str)]) -> ItemMetadata {
        ItemMetadata {
            item_id: "x".into(),
            fields: fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            image_ref: None,
            missing_fields: vec![],
            unknown_fields: vec![],
        }
    }

    #[test]
    fn brand_template() {
        let t = PromptTemplate::new("brand", "The product brand is {}.").unwrap();
        assert_eq!(t.fill("Graco"), "The product brand is Graco.");
        assert_eq!(t.fill(""), "The product brand is .");
    }

    #[test]
    fn placeholder_count_checked() {
        assert!(PromptTemplate::new("a", "no slot").is_err());
        assert!(PromptTemplate::new("a", "{} and {}").is_err());
        let bad = PromptTemplate {
            view_name: "a".into(),
            template: "x".into(),
        };
        assert!(TemplateSet::new(vec![bad], None).is_err());
    }

    #[test]
    fn global_view_concatenates_in_template_order() {
        let set = TemplateSet::new(
            vec![
                PromptTemplate::new("title", "The product title is {}.").unwrap(),
                PromptTemplate::new("brand", "The product brand is {}.").unwrap(),
            ],
            None,
        )
        .unwrap();
        let views = build_views(0, &meta(&[("brand", "B"), ("title", "A")]), &set, true).unwrap();
        assert_eq!(views.prompts.len(), 3);
        assert_eq!(views.prompts[2].0, "global");
        assert_eq!(views.prompts[2].1, "The product descriptions are A; B");
    }

    #[test]
    fn empty_field_keeps_view() {
        let set = TemplateSet::standard();
        let views = build_views(0, &meta(&[("title", "T")]), &set, true).unwrap();
        assert_eq!(views.prompts.len(), 5);
        assert_eq!(views.prompts[1].1, "The product brand is .");
        let names: Vec<_> = views.prompts.iter().map(|p| p.0.as_str()).collect();
        assert_eq!(names, set.view_names(true));
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(soft_truncate("short", 100), "short");
        assert_eq!(soft_truncate("aaaa bbbb", 6), "aaaa");
        assert_eq!(soft_truncate("abcdefgh", 4), "abcd");
        assert_eq!(soft_truncate("aaaa bbbb", 4), "aaaa");
        assert_eq!(soft_truncate(" abcdef", 3), " ab");
    }

    #[test]
    fn template_file_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut recs: Vec<PromptTemplate> = TemplateSet::standard().views().to_vec();
        recs.push(TemplateSet::standard().global().unwrap().clone());
        jsonl::write_records(f.path(), &recs).unwrap();
        assert_eq!(TemplateSet::from_file(f.path()).unwrap(), TemplateSet::standard());
    }

    proptest! {
        #[test]
        fn truncate_bounded_and_idempotent(s in "[a-z ]{0,40}", cap in 1usize..30) {
            let once = soft_truncate(&s, cap);
            prop_assert!(once.chars().count() <= cap);
            prop_assert_eq!(soft_truncate(&once, cap), once.clone());
            prop_assert!(s.starts_with(&once));
        }

        #[test]
        fn view_count_is_constant(title in ".{0,10}", brand in ".{0,10}", global in any::<bool>()) {
            let set = TemplateSet::standard();
            let m = meta(&[("title", &title), ("brand", &brand)]);
            let v = build_views(3, &m, &set, global).unwrap();
            prop_assert_eq!(v.prompts.len(), 4 + global as usize);
            prop_assert_eq!(v.clone(), build_views(3, &m, &set, global).unwrap());
        }
    }
}
