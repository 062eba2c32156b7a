//! The identity chain: demographics, face attributes, persona attributes,
//! commonsense inferences, the sentence form and the expanded narrative.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::artifacts::ArtifactRef;
use crate::extract::{parse_persona_lines, PersonaLines};
use crate::gateway::{Gateway, GatewayError, GenerationError};
use crate::lexicon::{
    AttributePool, Lexicon, NameLists, PersonaCategory, AGE_SLOT, BIRTHPLACE_SLOT, GENDER_SLOT,
    SHOT_SLOT,
};
use crate::prompts::{self, ProfileFields};
use crate::seed::rng_for;

pub const DEFAULT_P_SAME_RESIDENCE: f64 = 0.7;
pub const DEFAULT_MIN_PERSONAS: usize = 10;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("lexicon is missing {0}")]
    LexiconMissing(String),
    #[error("attribute pool is empty")]
    PoolMissing,
    #[error("no name list for {0}")]
    NameListMissing(String),
    #[error("only {parsed} persona lines parsed, need at least {min}")]
    TooFewParsed { parsed: usize, min: usize },
    #[error("narrative has {sentences} sentence(s), need at least 2")]
    TooShort { sentences: usize },
    #[error("value outside the lexicon: {0}")]
    OutOfLexicon(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl From<GenerationError<ProfileError>> for ProfileError {
    fn from(err: GenerationError<ProfileError>) -> Self {
        match err {
            GenerationError::Gateway(e) => ProfileError::Gateway(e),
            GenerationError::Rejected(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }

    /// `Male` / `Female`, as written in the planner prompt.
    pub fn title(self) -> &'static str {
        match self {
            Gender::Male => "Male",
            Gender::Female => "Female",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "man" => Ok(Gender::Male),
            "female" | "woman" => Ok(Gender::Female),
            other => Err(ProfileError::OutOfLexicon(format!("gender `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    /// Label of the age group the age was drawn from. Adjacent groups share
    /// their boundary ages, so the age alone does not identify it.
    pub age_group: String,
    pub gender: Gender,
    pub birthplace: String,
    pub residence: String,
}

impl Demographics {
    pub fn validate(&self, lexicon: &Lexicon) -> Result<(), ProfileError> {
        let group = lexicon
            .age_group(&self.age_group)
            .ok_or_else(|| ProfileError::OutOfLexicon(format!("age group `{}`", self.age_group)))?;
        if !group.contains(self.age) {
            return Err(ProfileError::OutOfLexicon(format!(
                "age {} outside group {}",
                self.age, group.label
            )));
        }
        if !lexicon.genders.iter().any(|g| g == self.gender.as_str()) {
            return Err(ProfileError::OutOfLexicon(format!("gender `{}`", self.gender)));
        }
        for country in [&self.birthplace, &self.residence] {
            if !lexicon.has_country(country) {
                return Err(ProfileError::OutOfLexicon(format!("country `{country}`")));
            }
        }
        Ok(())
    }

    /// `I am a 32-year-old male. I was born in X, I currently reside in Y.`
    pub fn sentence(&self) -> String {
        format!(
            "I am a {}-year-old {}. I was born in {}, I currently reside in {}.",
            self.age, self.gender, self.birthplace, self.residence
        )
    }

    pub fn fields<'a>(&'a self, name: &'a str) -> ProfileFields<'a> {
        ProfileFields {
            name,
            age: self.age,
            gender: self.gender.as_str(),
            birthplace: &self.birthplace,
            residence: &self.residence,
        }
    }
}

pub fn sample_demographics(
    lexicon: &Lexicon,
    rng_seed: u64,
    p_same_residence: f64,
) -> Result<Demographics, ProfileError> {
    sample_demographics_with(lexicon, &mut rng_for(rng_seed), p_same_residence)
}

/// Age group uniformly, then age uniformly inside it; the residence repeats
/// the birthplace with probability `p_same_residence`, otherwise it is a
/// different country chosen uniformly.
pub fn sample_demographics_with<R: Rng + ?Sized>(
    lexicon: &Lexicon,
    rng: &mut R,
    p_same_residence: f64,
) -> Result<Demographics, ProfileError> {
    let group = lexicon
        .age_groups
        .choose(rng)
        .ok_or_else(|| ProfileError::LexiconMissing("age groups".into()))?;
    let age = rng.gen_range(group.min..=group.max);
    let gender: Gender = lexicon
        .genders
        .choose(rng)
        .ok_or_else(|| ProfileError::LexiconMissing("genders".into()))?
        .parse()?;
    let birthplace = lexicon
        .countries
        .choose(rng)
        .ok_or_else(|| ProfileError::LexiconMissing("countries".into()))?
        .clone();
    let residence = if rng.gen_bool(p_same_residence.clamp(0.0, 1.0)) {
        birthplace.clone()
    } else {
        let others: Vec<&String> = lexicon.countries.iter().filter(|c| **c != birthplace).collect();
        others
            .choose(rng)
            .map(|c| (*c).clone())
            .ok_or_else(|| ProfileError::LexiconMissing("a second country".into()))?
    };
    Ok(Demographics {
        age,
        age_group: group.label.clone(),
        gender,
        birthplace,
        residence,
    })
}

/// Ordered slot → value map, serialized as a JSON object in slot order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SlotMap(pub Vec<(String, String)>);

impl SlotMap {
    pub fn get(&self, slot: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == slot).map(|(_, v)| v.as_str())
    }
}

impl Serialize for SlotMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for SlotMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SlotVisitor;
        impl<'de> Visitor<'de> for SlotVisitor {
            type Value = SlotMap;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of attribute slots to strings")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<SlotMap, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    entries.push((k, v));
                }
                Ok(SlotMap(entries))
            }
        }
        deserializer.deserialize_map(SlotVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceAttributeSet {
    pub attributes: SlotMap,
    pub rendered_prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_image_ref: Option<ArtifactRef>,
}

impl FaceAttributeSet {
    /// `A {shot}, a {age}-years-old {gender} from {birthplace}, {rest}.`
    pub fn render(attributes: &SlotMap) -> String {
        let get = |slot| attributes.get(slot).unwrap_or("");
        let mut out = format!(
            "A {}, a {}-years-old {} from {}",
            get(SHOT_SLOT),
            get(AGE_SLOT),
            get(GENDER_SLOT),
            get(BIRTHPLACE_SLOT)
        );
        for (slot, value) in &attributes.0 {
            let fixed = [SHOT_SLOT, AGE_SLOT, GENDER_SLOT, BIRTHPLACE_SLOT].contains(&slot.as_str());
            if !fixed && !value.trim().is_empty() {
                out.push_str(", ");
                out.push_str(value.trim());
            }
        }
        out.push('.');
        out
    }

    pub fn matches(&self, demographics: &Demographics) -> bool {
        self.attributes.get(AGE_SLOT) == Some(demographics.age.to_string().as_str())
            && self.attributes.get(GENDER_SLOT) == Some(demographics.gender.as_str())
            && self.attributes.get(BIRTHPLACE_SLOT) == Some(demographics.birthplace.as_str())
    }
}

/// Picks one pool combination and overwrites its demographic slots.
pub fn sample_face_attributes(
    demographics: &Demographics,
    pool: &AttributePool,
    rng_seed: u64,
) -> Result<FaceAttributeSet, ProfileError> {
    let mut rng = rng_for(rng_seed);
    let entry = pool.pool.choose(&mut rng).ok_or(ProfileError::PoolMissing)?;
    let attributes = SlotMap(
        pool.slots
            .iter()
            .map(|slot| {
                let value = match slot.as_str() {
                    AGE_SLOT => demographics.age.to_string(),
                    GENDER_SLOT => demographics.gender.as_str().to_string(),
                    BIRTHPLACE_SLOT => demographics.birthplace.clone(),
                    _ => entry.get(slot).cloned().unwrap_or_default(),
                };
                (slot.clone(), value)
            })
            .collect(),
    );
    let rendered_prompt = FaceAttributeSet::render(&attributes);
    Ok(FaceAttributeSet {
        attributes,
        rendered_prompt,
        face_image_ref: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersonaAttribute {
    pub subject: String,
    pub category: String,
    pub entity_key: String,
    pub entity_value: String,
    pub sentence: String,
}

impl PersonaAttribute {
    fn dedup_key(&self) -> (String, String, String) {
        (
            self.category.clone(),
            self.entity_key.to_lowercase(),
            self.entity_value.trim().to_lowercase(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaBatch {
    pub attributes: Vec<PersonaAttribute>,
    /// Lines dropped for not matching the pattern or the category's key.
    pub skipped: usize,
}

fn first_word(sentence: &str) -> String {
    sentence
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
        .to_string()
}

/// Converts parsed persona lines into attributes of `category`, counting
/// lines whose entity key differs from the category's.
pub fn personas_from_lines(parsed: PersonaLines, category: &PersonaCategory) -> PersonaBatch {
    let mut skipped = parsed.skipped;
    let mut attributes = Vec::with_capacity(parsed.lines.len());
    for line in parsed.lines.into_iter().take(30) {
        if !line.entity_key.eq_ignore_ascii_case(&category.entity_key) {
            skipped += 1;
            continue;
        }
        attributes.push(PersonaAttribute {
            subject: first_word(&line.sentence),
            category: category.id.clone(),
            entity_key: category.entity_key.clone(),
            entity_value: line.entity_value,
            sentence: line.sentence,
        });
    }
    PersonaBatch { attributes, skipped }
}

pub fn generate_personas(
    gateway: &Gateway,
    demographics: &Demographics,
    category: &PersonaCategory,
    min_parsed: usize,
) -> Result<PersonaBatch, ProfileError> {
    let request = prompts::persona_request(&demographics.fields(""), &category.label(), &category.entity_key);
    let (batch, _) = gateway.complete_parsed(&request, |text| {
        let batch = personas_from_lines(parse_persona_lines(text), category);
        if batch.attributes.len() < min_parsed {
            Err(ProfileError::TooFewParsed {
                parsed: batch.attributes.len(),
                min: min_parsed,
            })
        } else {
            Ok(batch)
        }
    })?;
    if batch.skipped > 0 {
        tracing::debug!(category = %category.id, skipped = batch.skipped, "persona lines skipped");
    }
    Ok(batch)
}

/// Drops later attributes repeating an earlier (category, key, value).
/// Returns how many were dropped.
pub fn dedup_personas(attributes: &mut Vec<PersonaAttribute>) -> usize {
    let before = attributes.len();
    let mut seen = HashSet::new();
    attributes.retain(|a| seen.insert(a.dedup_key()));
    before - attributes.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Characteristics,
    RoutinesHabits,
    GoalsPlans,
    Experiences,
    Relationships,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Characteristics,
        Relation::RoutinesHabits,
        Relation::GoalsPlans,
        Relation::Experiences,
        Relation::Relationships,
    ];

    /// The open slot the commonsense prompt asks the model to fill.
    pub fn slot(self) -> &'static str {
        match self {
            Relation::Characteristics => "<characteristic>",
            Relation::RoutinesHabits => "<routine/habit>",
            Relation::GoalsPlans => "<goal/plan>",
            Relation::Experiences => "<experience>",
            Relation::Relationships => "<relationship>",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Characteristics => "characteristics",
            Relation::RoutinesHabits => "routines_habits",
            Relation::GoalsPlans => "goals_plans",
            Relation::Experiences => "experiences",
            Relation::Relationships => "relationships",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommonsenseEntry {
    pub relation: Relation,
    /// Persona sentence the inference was drawn from.
    pub head: String,
    pub inference: String,
}

/// Keeps the first non-empty line and drops a leading echo of the slot label.
fn clean_inference(text: &str, relation: Relation) -> String {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line.strip_prefix(relation.slot()).map(|r| r.trim_start_matches(':').trim()).unwrap_or(line);
    line.trim().to_string()
}

pub fn generate_commonsense(
    gateway: &Gateway,
    attribute: &PersonaAttribute,
    demographics: &Demographics,
    relation: Relation,
) -> Result<CommonsenseEntry, ProfileError> {
    let request = prompts::commonsense_request(relation, &demographics.sentence(), &attribute.sentence);
    let completion = gateway.complete_chat(&request)?;
    Ok(CommonsenseEntry {
        relation,
        head: attribute.sentence.clone(),
        inference: clean_inference(&completion.text, relation),
    })
}

/// Fills the relation's sentence-form template.
pub fn render_sentence_form(
    entry: &CommonsenseEntry,
    attribute: &PersonaAttribute,
    demographics: &Demographics,
    name: &str,
) -> String {
    let demographic = demographics.sentence();
    let persona = attribute.sentence.trim();
    let commonsense = entry.inference.trim().trim_end_matches('.');
    match entry.relation {
        Relation::RoutinesHabits => {
            format!("My name is {name}. {demographic} {persona} I regularly {commonsense}.")
        }
        Relation::Characteristics => format!("My name is {name}. {demographic} {persona} I {commonsense}."),
        Relation::Experiences => format!("My name is {name}. I {commonsense}. Now, {demographic} {persona}"),
        Relation::GoalsPlans => format!("My name is {name}. {demographic} {persona} I plan {commonsense}."),
        Relation::Relationships => format!("My name is {name}. {demographic} {persona} So, I {commonsense}."),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narrative {
    pub name: String,
    pub sentence_form: String,
    pub expanded: String,
}

/// Counts sentences by splitting on `.`, `!` and `?` runs followed by
/// whitespace or the end of the text.
pub fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut count = 0;
    let mut has_content = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
                j += 1;
            }
            let boundary = j == chars.len() || chars[j].is_whitespace() || chars[j] == '"';
            if boundary && has_content {
                count += 1;
                has_content = false;
            }
            i = j;
            continue;
        }
        if c.is_alphanumeric() {
            has_content = true;
        }
        i += 1;
    }
    if has_content {
        count += 1;
    }
    count
}

pub fn expand_narrative(gateway: &Gateway, sentence_form: &str) -> Result<String, ProfileError> {
    let request = prompts::narrative_request(sentence_form);
    let (text, _) = gateway.complete_parsed(&request, |text| {
        let sentences = count_sentences(text);
        if sentences < 2 {
            Err(ProfileError::TooShort { sentences })
        } else {
            Ok(text.trim().to_string())
        }
    })?;
    Ok(text)
}

pub fn pick_name(names: &NameLists, country: &str, rng_seed: u64) -> Result<String, ProfileError> {
    let list = names
        .for_country(country)
        .filter(|l| !l.is_empty())
        .ok_or_else(|| ProfileError::NameListMissing(country.to_string()))?;
    Ok(list[rng_for(rng_seed).gen_range(0..list.len())].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockChatBackend, StepId};
    use std::sync::Arc;

    fn gateway(mock: MockChatBackend) -> Gateway {
        Gateway::new(Arc::new(mock))
    }

    fn demo() -> Demographics {
        Demographics {
            age: 32,
            age_group: "30-40".into(),
            gender: Gender::Male,
            birthplace: "United States of America".into(),
            residence: "United States of America".into(),
        }
    }

    #[test]
    fn sampled_demographics_are_in_lexicon() {
        let lex = Lexicon::bundled();
        for seed in 0..500 {
            let d = sample_demographics(&lex, seed, DEFAULT_P_SAME_RESIDENCE).unwrap();
            d.validate(&lex).unwrap();
        }
    }

    #[test]
    fn forced_residence_probability() {
        let lex = Lexicon::bundled();
        for seed in 0..200 {
            let same = sample_demographics(&lex, seed, 1.0).unwrap();
            assert_eq!(same.birthplace, same.residence);
            let moved = sample_demographics(&lex, seed, 0.0).unwrap();
            assert_ne!(moved.birthplace, moved.residence);
        }
    }

    #[test]
    fn face_prompt_reproduces_pool_example() {
        let pool = AttributePool::bundled();
        let first = SlotMap(
            pool.slots
                .iter()
                .map(|s| (s.clone(), pool.pool[0].get(s).cloned().unwrap_or_default()))
                .collect(),
        );
        let prompt = FaceAttributeSet::render(&first);
        assert!(
            prompt.starts_with("A upper body shot, a 42-years-old female from Japan, fit, a white wall, "),
            "{prompt}"
        );
        assert!(prompt.ends_with("cotton plaid tie."));
    }

    #[test]
    fn face_attributes_follow_demographics() {
        let pool = AttributePool::bundled();
        let d = Demographics {
            age: 17,
            age_group: "10-20".into(),
            gender: Gender::Male,
            birthplace: "Brazil".into(),
            residence: "Brazil".into(),
        };
        let a = sample_face_attributes(&d, &pool, 9).unwrap();
        assert!(a.rendered_prompt.contains("17-years-old male from Brazil"));
        assert!(a.matches(&d));
        assert_eq!(a, sample_face_attributes(&d, &pool, 9).unwrap());
        let empty = AttributePool { pool: vec![], ..pool };
        assert!(matches!(sample_face_attributes(&d, &empty, 9), Err(ProfileError::PoolMissing)));
    }

    #[test]
    fn persona_line_becomes_attribute() {
        let lex = Lexicon::bundled();
        let category = lex.category("location_residence_city_state").unwrap();
        let batch = personas_from_lines(
            parse_persona_lines("I am from London. (city-state: London)\nno entity here"),
            category,
        );
        assert_eq!(batch.skipped, 1);
        assert_eq!(
            batch.attributes[0],
            PersonaAttribute {
                subject: "I".into(),
                category: category.id.clone(),
                entity_key: "city-state".into(),
                entity_value: "London".into(),
                sentence: "I am from London.".into(),
            }
        );
    }

    #[test]
    fn too_few_personas_after_regeneration() {
        let lex = Lexicon::bundled();
        let category = lex.category("location_residence_city_state").unwrap();
        let gw = gateway(MockChatBackend::new().script(StepId::Persona, "*", "I like Rome. (city-state: Rome)"));
        let err = generate_personas(&gw, &demo(), category, DEFAULT_MIN_PERSONAS).unwrap_err();
        assert!(matches!(err, ProfileError::TooFewParsed { parsed: 1, min: 10 }));
    }

    #[test]
    fn dedup_keeps_first() {
        let a = PersonaAttribute {
            subject: "I".into(),
            category: "c".into(),
            entity_key: "k".into(),
            entity_value: "v".into(),
            sentence: "s1".into(),
        };
        let mut list = vec![a.clone(), PersonaAttribute { sentence: "s2".into(), ..a.clone() }];
        assert_eq!(dedup_personas(&mut list), 1);
        assert_eq!(list[0].sentence, "s1");
        assert_eq!(dedup_personas(&mut list), 0);
    }

    #[test]
    fn commonsense_is_trimmed_passthrough() {
        let gw = gateway(MockChatBackend::new().script(StepId::Commonsense, "*", "walk my dog every morning  \n"));
        let attr = PersonaAttribute {
            subject: "I".into(),
            category: "possession_animal".into(),
            entity_key: "animal".into(),
            entity_value: "dog".into(),
            sentence: "I have a dog.".into(),
        };
        let entry = generate_commonsense(&gw, &attr, &demo(), Relation::RoutinesHabits).unwrap();
        assert_eq!(entry.inference, "walk my dog every morning");
        let form = render_sentence_form(&entry, &attr, &demo(), "Tom");
        assert_eq!(
            form,
            "My name is Tom. I am a 32-year-old male. I was born in United States of America, I currently reside in United States of America. I have a dog. I regularly walk my dog every morning."
        );
        assert!(!form.contains('{'));
    }

    #[test]
    fn sentence_counting() {
        assert_eq!(count_sentences("One. Two! Three?"), 3);
        assert_eq!(count_sentences("Trailing words without stop"), 1);
        assert_eq!(count_sentences(""), 0);
        assert_eq!(count_sentences("I paid $3.50 today. Great..."), 2);
    }

    #[test]
    fn narrative_retry_then_too_short() {
        let gw = gateway(MockChatBackend::new().script(StepId::Narrative, "*", "Just one sentence."));
        assert!(matches!(
            expand_narrative(&gw, "My name is Tom."),
            Err(ProfileError::TooShort { sentences: 1 })
        ));
        let gw = gateway(
            MockChatBackend::new()
                .script(StepId::Narrative, "*", "Only one.")
                .script(StepId::Narrative, "*", "First. Second. Third."),
        );
        assert_eq!(expand_narrative(&gw, "x").unwrap(), "First. Second. Third.");
    }

    #[test]
    fn names_come_from_birth_country() {
        let names = NameLists::bundled();
        let name = pick_name(&names, "Japan", 3).unwrap();
        assert!(names.for_country("Japan").unwrap().contains(&name));
        assert_eq!(name, pick_name(&names, "Japan", 3).unwrap());
        assert!(matches!(pick_name(&names, "Atlantis", 3), Err(ProfileError::NameListMissing(_))));
    }
}
