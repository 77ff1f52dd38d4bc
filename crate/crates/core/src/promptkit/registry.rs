use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{PromptError, PromptTemplate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Paraphrase,
    Elements,
    Objectives,
}

impl VariantKind {
    pub const ALL: [VariantKind; 3] = [Self::Paraphrase, Self::Elements, Self::Objectives];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Paraphrase => "paraphrase",
            Self::Elements => "elements",
            Self::Objectives => "objectives",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PromptError::UnknownVariantKind(s.to_string()))
    }
}

/// An alternative body for a registered template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVariant {
    pub base_id: String,
    pub kind: VariantKind,
    pub variant_id: String,
    pub body: String,
}

/// Which variant, if any, replaces each base template during a run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveVariants(pub BTreeMap<String, (VariantKind, String)>);

impl ActiveVariants {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, base_id: impl Into<String>, kind: VariantKind, variant_id: impl Into<String>) -> Self {
        self.0.insert(base_id.into(), (kind, variant_id.into()));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Parses `base_id:kind:variant_id`.
    pub fn parse_selector(selector: &str) -> Result<(String, VariantKind, String), PromptError> {
        let mut parts = selector.rsplitn(3, ':');
        let variant = parts.next().unwrap_or_default();
        let kind = parts.next().unwrap_or_default();
        let base = parts.next().unwrap_or_default();
        if base.is_empty() || variant.is_empty() {
            return Err(PromptError::UnknownVariant(selector.to_string()));
        }
        Ok((base.to_string(), kind.parse()?, variant.to_string()))
    }
}

macro_rules! builtin_prompts {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../prompts/", $name)))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_prompts![
    "guess.adjudicator.txt",
    "guess.explain.txt",
    "guess.first.txt",
    "guess.format.txt",
    "guess.hint.txt",
    "guess.hint_clause.txt",
    "guess.knowledge.txt",
    "guess.knowledge.elements.no_bsearch.txt",
    "guess.next.txt",
    "guess.one_shot.txt",
    "guess.persona_aggressive.txt",
    "guess.persona_conservative.txt",
    "guess.plan.txt",
    "guess.reasoning_format.txt",
    "guess.rules.txt",
    "guess.rules.objectives.even_only.txt",
    "guess.rules.paraphrase.v1.txt",
    "evac.assessment.txt",
    "evac.choice.txt",
    "evac.explain.txt",
    "evac.feelings.txt",
    "evac.feelings_abm.txt",
    "evac.move.txt",
    "evac.move.elements.four_directions.txt",
    "evac.movement_instruction.txt",
    "evac.persona_strong_strong.txt",
    "evac.persona_strong_weak.txt",
    "evac.persona_weak_strong.txt",
    "evac.persona_weak_weak.txt",
    "evac.position_history.txt",
    "evac.receive.txt",
    "evac.scenario.txt",
    "evac.scenario.objectives.gallery.txt",
    "evac.scenario.paraphrase.v1.txt",
    "evac.share.txt",
    "evac.target_history.txt",
    "plea.adjustment.txt",
    "plea.comparative.txt",
    "plea.crime.txt",
    "plea.few_shot_example.txt",
    "plea.few_shot_header.txt",
    "plea.instruction.txt",
    "plea.offer.txt",
    "plea.tcu.txt",
    "firm.conversation_rules.txt",
    "firm.game.txt",
    "firm.history.txt",
    "firm.persona_active.txt",
    "firm.persona_aggressive.txt",
    "firm.plan.txt",
    "firm.price.txt",
    "firm.talk.txt",
    "firm.explain.txt",
];

/// Splits a file stem into `(base_id, Some((kind, variant_id)))` for variant
/// files or `(template_id, None)` for base templates.
fn classify_stem(stem: &str) -> (String, Option<(VariantKind, String)>) {
    let parts: Vec<&str> = stem.split('.').collect();
    if parts.len() >= 3 {
        if let Ok(kind) = parts[parts.len() - 2].parse::<VariantKind>() {
            let base = parts[..parts.len() - 2].join(".");
            return (base, Some((kind, parts[parts.len() - 1].to_string())));
        }
    }
    (stem.to_string(), None)
}

/// Text files are stored with a trailing newline; templates drop it.
fn normalize(body: &str) -> &str {
    body.strip_suffix('\n')
        .map(|b| b.strip_suffix('\r').unwrap_or(b))
        .unwrap_or(body)
}

#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    templates: BTreeMap<String, PromptTemplate>,
    variants: BTreeMap<(String, VariantKind, String), PromptVariant>,
}

impl PromptRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the prompts shipped with the crate.
    pub fn builtin() -> Self {
        let mut registry = Self::default();
        for (name, body) in BUILTIN {
            let stem = name.strip_suffix(".txt").expect("builtin prompt names end in .txt");
            registry.insert_file(stem, body).expect("builtin prompts parse");
        }
        registry
    }

    /// Builtin prompts overlaid with every `*.txt` file in `dir`.
    pub fn builtin_with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut registry = Self::builtin();
        registry.load_dir(dir)?;
        Ok(registry)
    }

    /// Loads `{id}.txt` templates and `{id}.{kind}.{variant}.txt` variants,
    /// replacing entries with the same id.
    pub fn load_dir(&mut self, dir: &Path) -> Result<(), PromptError> {
        let entries = std::fs::read_dir(dir).map_err(|e| PromptError::Io(dir.display().to_string(), e))?;
        let mut files: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for path in files {
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io(path.display().to_string(), e))?;
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            self.insert_file(stem, &body)?;
        }
        Ok(())
    }

    fn insert_file(&mut self, stem: &str, body: &str) -> Result<(), PromptError> {
        let body = normalize(body);
        match classify_stem(stem) {
            (base_id, Some((kind, variant_id))) => {
                // Validate syntax eagerly so broken files fail at load time.
                PromptTemplate::new(stem, body)?;
                self.insert_variant(PromptVariant {
                    base_id,
                    kind,
                    variant_id,
                    body: body.to_string(),
                });
            }
            (id, None) => self.insert(PromptTemplate::new(id, body)?),
        }
        Ok(())
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id.clone(), template);
    }

    pub fn insert_variant(&mut self, variant: PromptVariant) {
        self.variants.insert(
            (variant.base_id.clone(), variant.kind, variant.variant_id.clone()),
            variant,
        );
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.templates
            .get(id)
            .ok_or_else(|| PromptError::UnknownTemplate(id.to_string()))
    }

    pub fn template_ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn variants(&self) -> impl Iterator<Item = &PromptVariant> {
        self.variants.values()
    }

    /// The variant body as a template carrying the base template's id.
    pub fn select_variant(
        &self,
        base_id: &str,
        kind: VariantKind,
        variant_id: &str,
    ) -> Result<PromptTemplate, PromptError> {
        let variant = self
            .variants
            .get(&(base_id.to_string(), kind, variant_id.to_string()))
            .ok_or_else(|| PromptError::UnknownVariant(format!("{base_id}:{kind}:{variant_id}")))?;
        PromptTemplate::new(base_id, variant.body.clone())
    }

    /// The template to use for `id` under `active`.
    pub fn resolve(&self, id: &str, active: &ActiveVariants) -> Result<PromptTemplate, PromptError> {
        match active.0.get(id) {
            Some((kind, variant_id)) => self.select_variant(id, *kind, variant_id),
            None => self.get(id).cloned(),
        }
    }

    /// Checks that every selection in `active` names a registered variant.
    pub fn check_active(&self, active: &ActiveVariants) -> Result<(), PromptError> {
        for (base, (kind, variant)) in &active.0 {
            self.select_variant(base, *kind, variant)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptkit::bindings;

    #[test]
    fn stems() {
        assert_eq!(classify_stem("guess.rules"), ("guess.rules".into(), None));
        assert_eq!(
            classify_stem("guess.rules.paraphrase.v1"),
            ("guess.rules".into(), Some((VariantKind::Paraphrase, "v1".into())))
        );
    }

    #[test]
    fn builtin_variants_render() {
        let reg = PromptRegistry::builtin();
        let b = bindings([("range begin", "1"), ("range end", "100")]);
        let para = reg
            .select_variant("guess.rules", VariantKind::Paraphrase, "v1")
            .unwrap();
        assert_eq!(para.render(&b).unwrap(), "Pick an integer from 1 to 100.");
        let even = reg
            .select_variant("guess.rules", VariantKind::Objectives, "even_only")
            .unwrap();
        assert!(even
            .render(&b)
            .unwrap()
            .contains("an even integer ranging from 1 to 100."));
        let nob = reg
            .select_variant("guess.knowledge", VariantKind::Elements, "no_bsearch")
            .unwrap();
        assert_eq!(
            nob.render(&Default::default()).unwrap(),
            "You cannot use binary search."
        );
        assert!(matches!(
            reg.select_variant("guess.rules", VariantKind::Elements, "nope"),
            Err(PromptError::UnknownVariant(_))
        ));
    }

    #[test]
    fn directory_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("guess.format.txt"), "Reply with digits only.\n").unwrap();
        std::fs::write(dir.path().join("guess.format.paraphrase.terse.txt"), "Digits.").unwrap();
        let reg = PromptRegistry::builtin_with_overrides(dir.path()).unwrap();
        assert_eq!(reg.get("guess.format").unwrap().body, "Reply with digits only.");
        let active = ActiveVariants::none().with("guess.format", VariantKind::Paraphrase, "terse");
        assert_eq!(reg.resolve("guess.format", &active).unwrap().body, "Digits.");
    }

    #[test]
    fn selector_parsing() {
        let (b, k, v) = ActiveVariants::parse_selector("guess.knowledge:elements:no_bsearch").unwrap();
        assert_eq!(
            (b.as_str(), k, v.as_str()),
            ("guess.knowledge", VariantKind::Elements, "no_bsearch")
        );
        assert!(ActiveVariants::parse_selector("guess.knowledge:style:x").is_err());
    }
}
