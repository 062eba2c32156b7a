//! Minimal valid completions for unscripted mock requests. Every payload is
//! a pure function of the step and the instruction text, so whole pipeline
//! runs are reproducible offline.

use std::fmt::Write as _;

use crate::event_graph::{apply_interval, format_date, parse_date, TimeInterval, TimeUnit};

use super::StepId;

/// Cheap deterministic stream over the instruction hash.
struct Dice {
    state: u64,
}

impl Dice {
    fn new(key: &str) -> Self {
        let mut state = 0u64;
        for chunk in key.as_bytes().chunks(16).take(1) {
            state = u64::from_str_radix(std::str::from_utf8(chunk).unwrap_or("0"), 16).unwrap_or(0);
        }
        Self { state: state | 1 }
    }

    fn next(&mut self) -> u64 {
        // xorshift64*
        self.state ^= self.state >> 12;
        self.state ^= self.state << 25;
        self.state ^= self.state >> 27;
        self.state.wrapping_mul(0x2545_f491_4f6c_dd1d)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n.max(1) as u64) as usize
    }

    fn pick<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items[self.below(items.len())]
    }
}

pub(super) fn respond(step: StepId, instruction: &str, key: &str) -> String {
    let mut dice = Dice::new(key);
    match step {
        StepId::Persona => persona(instruction, &mut dice),
        StepId::Commonsense => commonsense(instruction, &mut dice),
        StepId::Narrative => narrative(instruction, &mut dice),
        StepId::Event => event_graph(instruction, &mut dice),
        StepId::Device => device(instruction, &mut dice),
        StepId::Dialogue => dialogue(instruction, &mut dice),
        StepId::PlanExecute => plan(instruction, &mut dice),
        StepId::Summary => summary(instruction, &mut dice),
    }
}

fn field<'a>(instruction: &'a str, label: &str) -> Option<&'a str> {
    instruction
        .lines()
        .find_map(|l| l.trim().strip_prefix(label))
        .map(str::trim)
}

/// Text between `start` and the following `end`.
fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end)? + from;
    Some(text[from..to].trim())
}

const THINGS: [&str; 12] = [
    "Maple", "Harbor", "Juniper", "Summit", "Willow", "Cobalt", "Meadow", "Lantern", "Orchid", "Granite", "Saffron",
    "Aurora",
];

const LIKES: [&str; 6] = [
    "I really enjoy",
    "I have fond memories of",
    "I often talk about",
    "I would love to learn more about",
    "I am not a big fan of",
    "I recently discovered",
];

fn persona(instruction: &str, dice: &mut Dice) -> String {
    let key = field(instruction, "Persona Entity Key:").unwrap_or("entity");
    let offset = dice.below(THINGS.len());
    let mut out = String::new();
    for i in 0..30 {
        let value = format!("{} {}", THINGS[(offset + i) % THINGS.len()], i + 1);
        let like = LIKES[(offset + i) % LIKES.len()];
        if i > 0 {
            let _ = write!(out, "\n{}. ", i + 1);
        }
        let _ = write!(out, "{like} {value}. ({key}: {value})");
    }
    out
}

fn commonsense(instruction: &str, dice: &mut Dice) -> String {
    let phrase = if instruction.contains("<routine/habit>") {
        dice.pick(&[
            "go for a long walk every evening",
            "cook dinner with fresh vegetables on weekends",
            "read for half an hour before bed",
        ])
    } else if instruction.contains("<goal/plan>") {
        dice.pick(&[
            "to travel abroad with my family next year",
            "to take an evening course this autumn",
            "to run a half marathon before my next birthday",
        ])
    } else if instruction.contains("<relationship>") {
        dice.pick(&[
            "often meet my old friends to share stories",
            "call my parents every Sunday",
            "volunteer with neighbors at the community garden",
        ])
    } else if instruction.contains("<experience>") {
        dice.pick(&[
            "moved to a new neighborhood a few years ago",
            "learned to play the guitar as a teenager",
            "spent a summer working at a local bakery",
        ])
    } else {
        dice.pick(&[
            "am patient and curious about the world",
            "am organized and like to plan ahead",
            "am friendly and easy to talk to",
        ])
    };
    phrase.to_string()
}

fn name_from_sentence_form(instruction: &str) -> &str {
    between(instruction, "My name is ", ".").unwrap_or("Alex")
}

fn narrative(instruction: &str, dice: &mut Dice) -> String {
    let name = name_from_sentence_form(instruction);
    let hobby = dice.pick(&["photography", "gardening", "cycling", "cooking", "painting", "hiking"]);
    let place = dice.pick(&["a small apartment near the river", "a quiet house by the park", "a busy downtown flat"]);
    format!(
        "{name} lives in {place} and fills most weekends with {hobby}. Over the past year {name} has been sharing progress with friends and keeping notes on every small success. {name} hopes to turn this interest into something bigger soon."
    )
}

const EVENTS: [&str; 8] = [
    "{name} signs up for a weekend pottery class at the community center. The first session is messy but fun.",
    "{name} adopts a rescue dog from the local shelter. The dog quickly becomes part of the family.",
    "{name} starts training for a charity run in the city. Friends promise to cheer from the sidelines.",
    "{name} takes a short trip to the coast with old classmates. They spend the evenings cooking together.",
    "{name} begins a new project at work that requires learning a new tool. The first week is challenging.",
    "{name} hosts a dinner party for neighbors to celebrate the season. Everyone brings a homemade dish.",
    "{name} visits a museum exhibition about modern photography. The visit sparks a new idea.",
    "{name} finishes a long-planned home renovation. The living room finally feels complete.",
];

const EXPERIENCES: [&str; 6] = [
    "{name} practiced every day and gained confidence.",
    "{name} met several new people who share the same interest.",
    "{name} changed the weekly routine to make more free time.",
    "{name} read a few books on the topic and took notes.",
    "{name} saved money carefully for the next step.",
    "{name} received encouraging feedback from family.",
];

fn event_graph(instruction: &str, dice: &mut Dice) -> String {
    let name = between(instruction, "", "'s initial personal event:").unwrap_or("Alex");
    let count = 5 + dice.below(2);
    let year = 2021 + dice.below(2) as i32;
    let start = format!("{year}.{:02}.{:02}", 1 + dice.below(12), 1 + dice.below(28));
    let start = parse_date(&start).expect("valid start date");
    let mut dates = vec![start];
    let mut nodes = Vec::new();
    let offset = dice.below(EVENTS.len());
    for i in 0..count {
        let event = EVENTS[(offset + i) % EVENTS.len()].replace("{name}", name);
        let caused_by = if i == 0 {
            serde_json::json!({})
        } else {
            // Mostly chain on the previous event, sometimes on an earlier one.
            let parent = if i >= 2 && dice.below(4) == 0 { i - 2 } else { i - 1 };
            let units = [TimeUnit::Day, TimeUnit::Week, TimeUnit::Month];
            let interval = TimeInterval::new(1 + dice.below(3) as u32, units[dice.below(units.len())]);
            // Keep children strictly after the latest scheduled date so the
            // graph reads chronologically.
            let mut date = apply_interval(dates[parent], interval);
            let mut interval = interval;
            while date <= *dates.last().expect("non-empty") {
                interval = TimeInterval::new(interval.count + 1, interval.unit);
                date = apply_interval(dates[parent], interval);
            }
            dates.push(date);
            let op = if dice.below(5) == 0 { "update" } else { "add" };
            let experience = EXPERIENCES[dice.below(EXPERIENCES.len())].replace("{name}", name);
            serde_json::json!({
                "caused_by:id": (parent + 1).to_string(),
                "caused_by:time_interval": interval.to_string(),
                "caused_by:experience_op": op,
                "caused_by:experience": experience,
            })
        };
        nodes.push(serde_json::json!({
            "id": (i + 1).to_string(),
            "event": event,
            "date": format_date(dates[i]),
            "caused_by": caused_by,
        }));
    }
    serde_json::to_string_pretty(&nodes).expect("json")
}

fn device(instruction: &str, dice: &mut Dice) -> String {
    let name = between(instruction, "stored on ", "'s mobile device").unwrap_or("Alex");
    let pool: [(&str, &str); 8] = [
        ("A selfie of {name} smiling at a neighborhood cafe", "Selfie, Food"),
        ("A photo of a golden retriever playing in the park", "Animal, Nature"),
        ("A screenshot of a weekly planner filled with notes", "Screenshot"),
        ("A picture of a sunset over a quiet lake", "Nature, Landscape"),
        ("A photo of {name} with friends at a birthday dinner", "Past Memory, Food"),
        ("A picture of a bowl of homemade noodle soup", "Food"),
        ("A photo of an old clock tower in the city center", "Landmark"),
        ("A selfie of {name} holding a finished painting", "Selfie, Art"),
    ];
    let offset = dice.below(pool.len());
    (0..5)
        .map(|i| {
            let (desc, cats) = pool[(offset + i) % pool.len()];
            let line = format!("{} (Category: {cats})", desc.replace("{name}", name));
            if i == 0 {
                line
            } else {
                format!("{}. {line}", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Device descriptions listed in a dialogue instruction, by index.
fn listed_devices(instruction: &str) -> Vec<(u32, String)> {
    let Some(section) = instruction.split("mobile device:").nth(1) else {
        return Vec::new();
    };
    section
        .lines()
        .map_while(|line| {
            let line = line.trim();
            if line.is_empty() {
                return Some(None);
            }
            let (num, rest) = line.split_once(". ")?;
            num.parse::<u32>().ok().map(|n| Some((n, rest.to_string())))
        })
        .flatten()
        .collect()
}

fn dialogue(instruction: &str, dice: &mut Dice) -> String {
    let name = between(instruction, "", "'s Profile Information:").unwrap_or("User");
    let topic = instruction
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("- Topic on ").and_then(|t| t.split_once(": ")).map(|(_, e)| e))
        .unwrap_or("daily life");
    let devices = listed_devices(instruction);
    let assistant = "AI Assistant";
    let mut turns: Vec<serde_json::Value> = Vec::new();
    let mut push = |speaker: &str, utterance: &str, sharing: serde_json::Value| {
        let id = turns.len() + 1;
        turns.push(serde_json::json!({
            "utterance_id": id,
            "speaker": speaker,
            "utterance": utterance,
            "sharing_info": sharing,
        }));
    };
    push(name, &format!("Hi! I wanted to tell you about something. {topic}"), serde_json::json!({}));
    push(assistant, "That sounds exciting! How are you feeling about it?", serde_json::json!({}));

    let sharing = 1 + dice.below(3);
    for s in 0..sharing {
        let kind = dice.below(3);
        let info = if kind == 0 && !devices.is_empty() {
            let (index, desc) = &devices[dice.below(devices.len())];
            serde_json::json!({
                "rationale": "To show a related moment from my phone.",
                "image_description": desc,
                "image_source": "mobile",
                "keywords": keywords(desc),
                "image_id_from_mobile": index,
            })
        } else if kind == 1 && s == 0 {
            let desc = format!("A new photo {name} took today related to: {}", first_sentence(topic));
            serde_json::json!({
                "rationale": "To share a fresh picture from today.",
                "image_description": desc,
                "image_source": "mobile",
                "keywords": keywords(&desc),
                "image_id_from_mobile": "new added image",
            })
        } else {
            let desc = format!("An image from the internet illustrating {}", first_sentence(topic).to_lowercase());
            serde_json::json!({
                "rationale": "To help explain the topic visually.",
                "image_description": desc,
                "image_source": "internet",
                "keywords": keywords(&desc),
            })
        };
        let speaker = if s % 2 == 0 { name } else { assistant };
        push(speaker, "", info);
        let reply_speaker = if s % 2 == 0 { assistant } else { name };
        push(reply_speaker, "What a great picture, thanks for sharing it.", serde_json::json!({}));
    }
    let extra = dice.below(4);
    for i in 0..extra {
        let speaker = if i % 2 == 0 { name } else { assistant };
        push(speaker, "Let's keep talking about how this is going.", serde_json::json!({}));
    }
    push(assistant, "I'm glad you shared this with me. Talk soon!", serde_json::json!({}));
    serde_json::to_string_pretty(&turns).expect("json")
}

fn first_sentence(text: &str) -> &str {
    text.split_inclusive(". ").next().unwrap_or(text).trim().trim_end_matches('.')
}

fn keywords(desc: &str) -> Vec<String> {
    desc.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 3)
        .take(3)
        .map(str::to_lowercase)
        .collect()
}

fn plan(instruction: &str, dice: &mut Dice) -> String {
    let name = field(instruction, "Name:").unwrap_or("");
    let gender = field(instruction, "Gender:").unwrap_or("").to_lowercase();
    let age: u32 = field(instruction, "Age:").and_then(|a| a.parse().ok()).unwrap_or(30);
    let desc = field(instruction, "Image Description:").unwrap_or("");
    if !name.is_empty() && desc.contains(name) {
        let female = gender.starts_with('f');
        let class = match (age, female) {
            (0..=17, false) => "a boy",
            (0..=17, true) => "a girl",
            (18..=29, false) => "a young man",
            (18..=29, true) => "a young woman",
            (65.., false) => "an elderly man",
            (65.., true) => "an elderly woman",
            (_, false) => "a man",
            (_, true) => "a woman",
        };
        let modified = desc.replacen(name, &format!("{class} [img]"), 1);
        return format!(" Personalized Text-to-Image Generator\nModified Image Description: {modified}");
    }
    let lower = desc.to_lowercase();
    let newsy = lower.split(|c: char| !c.is_alphanumeric()).any(|w| {
        (w.len() == 4 && w.starts_with("20") && w.chars().all(|c| c.is_ascii_digit()))
            || matches!(w, "news" | "internet" | "official" | "poster" | "championship" | "cup" | "election" | "launch")
    });
    if newsy || dice.below(3) == 0 {
        " Web Search".to_string()
    } else {
        " Image Database Retrieval".to_string()
    }
}

fn summary(instruction: &str, dice: &mut Dice) -> String {
    let name = between(instruction, "conversation between ", " and the AI assistant").unwrap_or("The user");
    let date = between(instruction, "the AI assistant on ", " today").unwrap_or("that day");
    let mood = dice.pick(&["excited", "thoughtful", "relaxed", "curious"]);
    format!("On {date}, {name} was {mood} while telling the AI assistant about recent events and shared photos from the day")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{extract_structured, ParsedPayload, SchemaKind};
    use crate::event_graph::{validate_event_graph, GraphRules};
    use crate::extract::parse_raw_event_graph;

    #[test]
    fn canned_event_graphs_validate() {
        for i in 0..200 {
            let key = format!("{:064x}", i * 7919 + 13);
            let text = respond(StepId::Event, "Mia's initial personal event: x", &key);
            let raw = parse_raw_event_graph(&text).unwrap();
            let report = validate_event_graph(&raw, &GraphRules::default());
            assert!(report.is_empty(), "{report:?}\n{text}");
        }
    }

    #[test]
    fn canned_personas_parse() {
        let text = respond(StepId::Persona, "Persona Entity Key: animal\nPersona Sentences:\n1.", &"ab".repeat(32));
        let ParsedPayload::PersonaLines(lines) = extract_structured(&text, SchemaKind::PersonaLineList).unwrap() else {
            panic!()
        };
        assert_eq!(lines.lines.len(), 30);
        assert_eq!(lines.skipped, 0);
        assert!(lines.lines.iter().all(|l| l.entity_key == "animal"));
    }

    #[test]
    fn canned_plan_rewrites_the_name() {
        let text = respond(
            StepId::PlanExecute,
            "Name: Tom\nGender: Male\nAge: 21\nImage Description: A selfie of Tom smiling at the Golden State Warriors' arena during a game\nModule:",
            &"0".repeat(64),
        );
        assert!(text.contains("A selfie of a young man [img] smiling at the Golden State Warriors' arena during a game"));
    }
}
