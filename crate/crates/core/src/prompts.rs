//! Prompt templates for every generation step.
//!
//! Each builder returns a [`ChatRequest`] whose system message and
//! instruction are filled in with a single-pass `{placeholder}` renderer, so
//! braces that appear inside substituted values are never re-expanded.

use crate::gateway::{ChatRequest, StepId};
use crate::profile::Relation;

pub const HELPFUL_ASSISTANT: &str = "You are a helpful assistant.";

pub const PERSONA_SYSTEM: &str = "Based on the given persona category, entity key, and user's profile information (i.e., age, gender, nationality), your job is to generate 30 persona sentences and corresponding persona entity values in the format \"<persona sentence> (<entity key>: <entity value>).\" You should generate very specific persona sentences and entity values. The persona sentence can express a positive sentiment (like) or a negative one (dislike).

For example,

{few_shot_example}";

pub const PERSONA_FEW_SHOT: &str = "Profile Information:
- Age: 27
- Gender: female
- Birthplace: United Kingdom
- Residence: United Kingdom

Persona Category: Location > Residence
Persona Entity Key: city-state
Persona Sentences:
1. I am from London. (city-state: London)
2. I spent my childhood summers in Brighton. (city-state: Brighton)
3. I would never want to live in a city as crowded as Birmingham. (city-state: Birmingham)";

pub const PERSONA_INSTRUCTION: &str = "Profile Information:
- Age: {age}
- Gender: {gender}
- Birthplace: {birthplace}
- Residence: {residence}

Persona Category: {category}
Persona Entity Key: {entity_key}
Persona Sentences:
1.";

pub const COMMONSENSE_INSTRUCTION: &str = "{frame}

Generate the most appropriate sentence for \"{slot}\" in the given sentence. You must provide the answer corresponding to \"{slot}\".
{slot}:";

pub const NARRATIVE_INSTRUCTION: &str = "{sentence_form}

Rewrite this sentence with more specific details in two or three sentences:";

pub const EVENT_GRAPH_SYSTEM: &str = "You should generate a temporal event graph composed of daily events occuring in a person's life. The temporal event graph contains nodes and edges. Each node represents a daily event which is written in two or three sentences. Each edge represents the casual relationship between two nodes (events), i.e., a past event -> current event. The current event is determined by how much time has passed since the past event and what personal experiences were had during that period. You must generate the temporal event graph following the guidelines below.

[Guideline]
- The graph is represented in the form of a json list.
- Each entry is a python dictionary containing the following keys: \"id\", \"event\", \"date\", \"caused_by\".
- The \"id\" field contains a unique identifier for the current event.
- The \"event\" field contains a description of the current event.
- The \"date\" field contains a specific date of the current event and is represented in the form of \"%Y.%m.%d\".
- The \"caused_by\" field represents the edge (i.e., a past event) and is represented in the form of a python dictionary containing the following keys: \"caused_by:id\", \"caused_by:time_interval\", \"caused_by:experience_op\", \"caused_by:experience\".
- The \"caused_by:id\" field contains an \"id\" of the past event that has caused the current event.
- The \"caused_by:time_interval\" field contains a time interval between the past event and the current event.
- The \"caused_by:experience_op\" field contains an episodic experience operation.
- The \"caused_by:experience\" field contains a short description of the added or updated episodic experience.
- The unit of time interval is [\"hour\", \"day\", \"week\", \"month\", \"year\"].
- The selected time interval should be formatted as \"<base number> <time interval unit>\".
- List of the episodic experience operation is [\"add\", \"update\"].
- The \"add\" operation refers to an operation that adds a new experience that have not been encountered in the past.
- The \"update\" operation refers to an operation that updates a past experience with a new experience.
- Events/Experiences can be positive or negative events or experiences.
- Events in the \"caused_by:id\" field should occur on dates before the current event that they have caused.
- If there is no entry of \"caused_by\" field, then you should generate an empty dictionary.
- Each event must be written in the present tense.
- The year in the \"date\" field must be until April 2024.
- You should generate the temporal event graph based on commonsense or a world model.";

pub const EVENT_GRAPH_INSTRUCTION: &str = "{name}'s initial personal event: {event}

Given the {name}'s initial personal event, generate the temporal event graph containing more than five events.
Temporal Event Graph:";

pub const DEVICE_SYSTEM: &str = "Given the sentence related to a person's daily life, your task is to generate five image descriptions that could be stored on the person's mobile device, along with corresponding image categories. You should use the format \"<image_description> (Category: <image_category>)\". The image category may include selfies, past memories, screenshots, landmarks, animals, art, celebrities, nature, and food.

For example,

My name is Tom. I am a 32-year-old man. I was born in the USA and currently reside there. I have a strong interest in basketball. I played basketball in middle school, but now I work as a chatbot developer at a startup. I enjoy watching the NBA because I love basketball.

Image descriptions stored on Tom's mobile device:
1. A photo of a young Tom playing basketball in a middle school gymnasium (Category: Past Memory, Sport)
2. A selfie of Tom smiling at the Golden State Warriors' arena during a game (Category: Selfie, Sport)
3. A screenshot of chatbot development code using Python (Category: Screenshot, Computer, Software)
4. A picture of Tom enjoying a night out with coworkers at a local pub (Category: Social Networking, Food, Drink)
5. A photo of Tom meeting a famous NBA player at a basketball event (Category: Celebrity, Sport)";

pub const DEVICE_INSTRUCTION: &str = "{narrative}

Given the sentence above, generate five possible image descriptions that are stored on {name}'s mobile device. For example, images may include selfies, past memories, screenshots, landmarks, animals, art, celebrities, nature, and food.
1.";

pub const DIALOGUE_SYSTEM: &str = "Your job is to generate a long in-depth conversation between an user and an user-friendly AI assistant with multiple turns. The user and AI assistant can share images during a conversation in order to strengthen social relationship, to convey important information, to amuse/entertain, to clarify complex situations, to change the topic of dialogue, or to express emotions/opinions/reactions. There must be more than two image-sharing moments within the conversation. The shared images can either be from the collection previously stored on the user's mobile device or obtained from the internet. You must generate the conversation following the guidelines below.

[Guideline]
- The conversation is represented in the form of a json list.
- Each entry is a python dictionary containing the following keys: \"utterance_id\", \"speaker\", \"utterance\", \"sharing_info\".
- The \"utterance_id\" field contains a unique identifier for the utterance within the conversation.
- The \"speaker\" field contains a speaker of the utterance.
- The \"utterance\" field contains the utterance of the speaker. If the image-sharing behavior occurs, then the \"utterance\" is a empty string.
- The \"sharing_info\" field represents the image-sharing moment and is represented in the form of a python dictionary containing the following keys: \"rationale\", \"image_description\", \"image_source\", \"keywords\", \"image_id_from_mobile\".
- If the image-sharing moment does not occur, then the \"sharing_info\" field is an empty python dictionary.
- The \"rationale\" field represents the reason behind sharing the relevant image.
- The \"image_description\" field contains a description of the shared image.
- The \"image_source\" field contains a source of the shared image whether it is from the internet (internet) or the user's mobile device (mobile).
- If you select the user's mobile device as the \"image_source,\" you must either share an image that matches one of the existing descriptions already on the user's mobile device or share a new image that does not exist among these descriptions.
- If you share an image that matches one of the existing descriptions on the user's mobile device, you must generate the appropriate image ID in the \"image_id_from_mobile\" field.
- If you share a new image that does not match any existing descriptions on the user's mobile device, you must enter \"new added image\" in the \"image_id_from_mobile\" field.
- The \"keywords\" field contains keywords of the shared image.";

const DIALOGUE_PROFILE: &str = "{name}'s Profile Information:
- Age: {age}
- Gender: {gender}
- Birthplace: {birthplace}
- Residence: {residence}

Existing image descriptions in {name}'s mobile device: {device_images}
";

pub const DIALOGUE_FIRST_INSTRUCTION: &str = "The topic of the conversation between the AI assistant and {name} on {date} today is as follows.
- Topic on {date}: {event}

Generate a long, in-depth conversation with multiple turns based on the given {name}'s profile information and the current topic of conversation.";

pub const DIALOGUE_NTH_INSTRUCTION: &str = "The topics of the conversation the user had with AI assistant by date are as follows:
{event_history}

{time_interval} later from the {last_date}, on {date} today, {name} has gone through a new experience, and based on this experience, {name} and the AI assistant engage in a conversation today. The new experience {name} went through and the topic of conversation with the AI assistant are as follows.
- {name}'s Experience: {experience}
- Topic on {date}: {event}

Generate a long, in-depth conversation with multiple turns based on the given {name}'s profile information, the last topic of conversation, the experience and the current topic of conversation.";

pub const PLAN_SYSTEM: &str = "Your job is to determine the most appropriate module from a list of models to process the input request. Please select one module from the following list:

Personalized Text-to-Image Generator: This module generates personalized images from a given description and a human face image. For example, if you provide a face image and a description like \u{201c}A selfie of Tom smiling at the Golden State Warriors' arena during a game,\u{201d} the module will generate a customized realistic human image. Note that when you generate the answer, you must generate the module name and modified image description together. The modified image description MUST include a strict format: \u{201c}<class_word> [img]\u{201d}. <class_word> represents the identity of a human, such as a man, woman, girl, boy, or young boy, etc. [img] denotes the special token. You must not omit this strict format, and you must keep the original image description as it is and only add this strict format.

Web Search: This module finds related images from the internet in real-time based on the given user's input image description. The image description is primarily related to the latest information. Therefore, this method is useful when up-to-date information is needed.

Image Database Retrieval: This module finds relevant images from a pre-built image database based on the given user's input image description. To build an image database containing images on various topics, images are collected from the RedCaps, Conceptual Captions 12M (CC12M), ChartQA, AI2D, and MathVision datasets. Descriptions related to each dataset are as follows:
- RedCaps: This is a large-scale dataset of 12M image-text pairs collected from Reddit. Images and captions from Reddit depict and describe a wide variety of objects and scenes.
- CC12M: This is a dataset with 12 million image-text pairs specifically meant to be used for vision and language pre-training. It is larger and covers a much more diverse set of visual concepts than the Conceptual Captions (CC3M).
- ChartQA: This is a large-scale ChartQA dataset with real-world charts and human-authored question-answer pairs. This dataset covers 9.6K chart images.
- AI2D: This is a dataset of over 5,000 grade school science diagrams with over 150,000 rich annotations, their ground truth syntactic parses, and more than 15,000 corresponding multiple choice questions.
- MathVision: This dataset is a meticulously curated collection of 3,040 high-quality mathematical problems with visual contexts sourced from real math competitions. Spanning 16 distinct mathematical disciplines and graded across 5 levels of difficulty.

For example,

Name: Tom
Gender: Male
Age: 21
Image Description: A selfie of Tom smiling at the Golden State Warriors' arena during a game
Module: Personalized Text-to-Image Generator
Modified Image Description: A selfie of a young man [img] smiling at the Golden State Warriors' arena during a game

Name: Tom
Gender: Male
Age: 21
Image Description: A screenshot of chatbot development code using Python
Module: Image Database Retrieval

Name: Tom
Gender: Male
Age: 21
Image Description: A photo of Manchester United lifting the 2023-24 FA Cup trophy
Module: Web Search";

pub const PLAN_INSTRUCTION: &str = "Name: {name}
Gender: {gender}
Age: {age}
Image Description: {image_description}
Module:";

pub const SUMMARY_SYSTEM: &str = "Your job is to summarize the given conversation.";

pub const SUMMARY_FIRST_INSTRUCTION: &str = "The conversation between {name} and the AI assistant on {current_date} today is as follow.

{dialogue}

Summarize the given conversation between {name} and the AI assistant so far. Include key details about both speakers and include time references.
Summarization:";

pub const SUMMARY_NTH_INSTRUCTION: &str = "In the previous interaction, {previous_summary}. {time_interval} later from the {last_date}, the conversation between {name} and the AI assistant on {current_date} today is as follow.

{dialogue}

Summarize the given conversation between {name} and the AI assistant so far. Include key details about both speakers and include time references.
Summarization:";

/// Fills `{key}` placeholders in one pass. Unknown placeholders are left as-is.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let key = &after[..close];
                match vars.iter().find(|(k, _)| *k == key) {
                    Some((_, value)) => out.push_str(value),
                    None => {
                        out.push('{');
                        out.push_str(key);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Profile block shared by the dialogue prompts.
#[derive(Debug, Clone, Copy)]
pub struct ProfileFields<'a> {
    pub name: &'a str,
    pub age: u32,
    pub gender: &'a str,
    pub birthplace: &'a str,
    pub residence: &'a str,
}

pub fn persona_request(
    profile: &ProfileFields<'_>,
    category: &str,
    entity_key: &str,
) -> ChatRequest {
    let age = profile.age.to_string();
    ChatRequest::new(
        StepId::Persona,
        fill(PERSONA_SYSTEM, &[("few_shot_example", PERSONA_FEW_SHOT)]),
        fill(
            PERSONA_INSTRUCTION,
            &[
                ("age", &age),
                ("gender", profile.gender),
                ("birthplace", profile.birthplace),
                ("residence", profile.residence),
                ("category", category),
                ("entity_key", entity_key),
            ],
        ),
    )
}

/// The commonsense frame sentence with the relation's answer slot left open,
/// e.g. `"... I regularly <routine/habit>."`.
pub fn commonsense_frame(relation: Relation, demographic: &str, persona: &str) -> String {
    let slot = relation.slot();
    match relation {
        Relation::RoutinesHabits => format!("{demographic} {persona} I regularly {slot}."),
        Relation::GoalsPlans => format!("{demographic} {persona} I plan {slot}."),
        Relation::Relationships => format!("{demographic} {persona} So, I {slot}."),
        Relation::Experiences => format!("I {slot}. Now, {demographic} {persona}"),
        Relation::Characteristics => format!("{demographic} {persona} I {slot}."),
    }
}

pub fn commonsense_request(relation: Relation, demographic: &str, persona: &str) -> ChatRequest {
    let frame = commonsense_frame(relation, demographic, persona);
    ChatRequest::new(
        StepId::Commonsense,
        HELPFUL_ASSISTANT,
        fill(
            COMMONSENSE_INSTRUCTION,
            &[("frame", &frame), ("slot", relation.slot())],
        ),
    )
}

pub fn narrative_request(sentence_form: &str) -> ChatRequest {
    ChatRequest::new(
        StepId::Narrative,
        HELPFUL_ASSISTANT,
        fill(NARRATIVE_INSTRUCTION, &[("sentence_form", sentence_form)]),
    )
}

pub fn event_graph_request(name: &str, initial_event: &str) -> ChatRequest {
    ChatRequest::new(
        StepId::Event,
        EVENT_GRAPH_SYSTEM,
        fill(
            EVENT_GRAPH_INSTRUCTION,
            &[("name", name), ("event", initial_event)],
        ),
    )
}

pub fn device_request(narrative: &str, name: &str) -> ChatRequest {
    ChatRequest::new(
        StepId::Device,
        DEVICE_SYSTEM,
        fill(DEVICE_INSTRUCTION, &[("narrative", narrative), ("name", name)]),
    )
}

/// Renders device descriptions as numbered lines, one per image id.
pub fn device_listing<'a>(items: impl IntoIterator<Item = (u32, &'a str)>) -> String {
    items
        .into_iter()
        .map(|(index, description)| format!("\n{index}. {description}"))
        .collect()
}

fn dialogue_profile(profile: &ProfileFields<'_>, device_listing: &str) -> String {
    let age = profile.age.to_string();
    fill(
        DIALOGUE_PROFILE,
        &[
            ("name", profile.name),
            ("age", &age),
            ("gender", profile.gender),
            ("birthplace", profile.birthplace),
            ("residence", profile.residence),
            ("device_images", device_listing),
        ],
    )
}

pub fn dialogue_first_request(
    profile: &ProfileFields<'_>,
    device_listing: &str,
    date: &str,
    event: &str,
) -> ChatRequest {
    let body = fill(
        DIALOGUE_FIRST_INSTRUCTION,
        &[("name", profile.name), ("date", date), ("event", event)],
    );
    ChatRequest::new(
        StepId::Dialogue,
        DIALOGUE_SYSTEM,
        format!("{}\n{}", dialogue_profile(profile, device_listing), body),
    )
}

/// One `- {date}: {event}` line per prior session.
pub fn event_history<'a>(history: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    history
        .into_iter()
        .map(|(date, event)| format!("- {date}: {event}"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Copy)]
pub struct NthRound<'a> {
    pub event_history: &'a str,
    pub time_interval: &'a str,
    pub last_date: &'a str,
    pub date: &'a str,
    pub experience: &'a str,
    pub event: &'a str,
}

pub fn dialogue_nth_request(
    profile: &ProfileFields<'_>,
    device_listing: &str,
    round: &NthRound<'_>,
) -> ChatRequest {
    let body = fill(
        DIALOGUE_NTH_INSTRUCTION,
        &[
            ("name", profile.name),
            ("event_history", round.event_history),
            ("time_interval", round.time_interval),
            ("last_date", round.last_date),
            ("date", round.date),
            ("experience", round.experience),
            ("event", round.event),
        ],
    );
    ChatRequest::new(
        StepId::Dialogue,
        DIALOGUE_SYSTEM,
        format!("{}\n{}", dialogue_profile(profile, device_listing), body),
    )
}

pub fn plan_request(name: &str, gender: &str, age: u32, image_description: &str) -> ChatRequest {
    let age = age.to_string();
    ChatRequest::new(
        StepId::PlanExecute,
        PLAN_SYSTEM,
        fill(
            PLAN_INSTRUCTION,
            &[
                ("name", name),
                ("gender", gender),
                ("age", &age),
                ("image_description", image_description),
            ],
        ),
    )
}

pub fn summary_first_request(name: &str, current_date: &str, dialogue: &str) -> ChatRequest {
    ChatRequest::new(
        StepId::Summary,
        SUMMARY_SYSTEM,
        fill(
            SUMMARY_FIRST_INSTRUCTION,
            &[
                ("name", name),
                ("current_date", current_date),
                ("dialogue", dialogue),
            ],
        ),
    )
}

pub fn summary_nth_request(
    name: &str,
    current_date: &str,
    dialogue: &str,
    previous_summary: &str,
    time_interval: &str,
    last_date: &str,
) -> ChatRequest {
    // The template supplies the closing period itself.
    let previous = previous_summary.trim().trim_end_matches('.');
    ChatRequest::new(
        StepId::Summary,
        SUMMARY_SYSTEM,
        fill(
            SUMMARY_NTH_INSTRUCTION,
            &[
                ("name", name),
                ("current_date", current_date),
                ("dialogue", dialogue),
                ("previous_summary", previous),
                ("time_interval", time_interval),
                ("last_date", last_date),
            ],
        ),
    )
}
