use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Pipeline step a chat request belongs to. Each step has its own sampling row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepId {
    Persona,
    Commonsense,
    Narrative,
    Event,
    Device,
    Dialogue,
    PlanExecute,
    Summary,
}

impl StepId {
    pub const ALL: [StepId; 8] = [
        StepId::Persona,
        StepId::Commonsense,
        StepId::Narrative,
        StepId::Event,
        StepId::Device,
        StepId::Dialogue,
        StepId::PlanExecute,
        StepId::Summary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StepId::Persona => "persona",
            StepId::Commonsense => "commonsense",
            StepId::Narrative => "narrative",
            StepId::Event => "event",
            StepId::Device => "device",
            StepId::Dialogue => "dialogue",
            StepId::PlanExecute => "plan_execute",
            StepId::Summary => "summary",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StepId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StepId::ALL
            .into_iter()
            .find(|step| step.as_str() == s)
            .ok_or_else(|| format!("unknown step id `{s}`"))
    }
}

/// Sampling parameters sent with every chat-completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSettings {
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    pub max_tokens: u32,
}

impl GenSettings {
    pub const fn new(
        temperature: f64,
        top_p: f64,
        frequency_penalty: f64,
        presence_penalty: f64,
        max_tokens: u32,
    ) -> Self {
        Self {
            temperature,
            top_p,
            frequency_penalty,
            presence_penalty,
            max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let in_range = |v: f64, lo: f64, hi: f64| v.is_finite() && (lo..=hi).contains(&v);
        if !in_range(self.temperature, 0.0, 2.0) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !in_range(self.top_p, 0.0, 1.0) {
            return Err(format!("top_p {} outside [0, 1]", self.top_p));
        }
        if !in_range(self.frequency_penalty, -2.0, 2.0) {
            return Err(format!(
                "frequency_penalty {} outside [-2, 2]",
                self.frequency_penalty
            ));
        }
        if !in_range(self.presence_penalty, -2.0, 2.0) {
            return Err(format!(
                "presence_penalty {} outside [-2, 2]",
                self.presence_penalty
            ));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        Ok(())
    }
}

/// One [`GenSettings`] row per [`StepId`].
#[derive(Debug, Clone, PartialEq)]
pub struct SettingsTable {
    rows: [GenSettings; 8],
}

impl Default for SettingsTable {
    /// The published generation settings.
    ///
    /// The dialogue row carries `top_p = 0` exactly as published.
    fn default() -> Self {
        Self {
            rows: [
                GenSettings::new(0.9, 1.0, 0.0, 0.0, 2048), // persona
                GenSettings::new(0.9, 1.0, 0.0, 0.0, 1024), // commonsense
                GenSettings::new(0.9, 0.95, 1.0, 0.6, 2048), // narrative
                GenSettings::new(0.9, 1.0, 0.0, 0.0, 4096), // event
                GenSettings::new(0.9, 1.0, 0.0, 0.0, 1024), // device
                GenSettings::new(0.9, 0.0, 0.0, 0.0, 4096), // dialogue
                GenSettings::new(0.9, 0.95, 1.0, 0.6, 1024), // plan_execute
                GenSettings::new(0.9, 0.95, 1.0, 0.6, 1024), // summary
            ],
        }
    }
}

impl SettingsTable {
    pub fn get(&self, step: StepId) -> GenSettings {
        self.rows[step.index()]
    }

    pub fn set(&mut self, step: StepId, settings: GenSettings) -> Result<(), String> {
        settings
            .validate()
            .map_err(|e| format!("settings for step `{step}`: {e}"))?;
        self.rows[step.index()] = settings;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rows_are_valid() {
        let table = SettingsTable::default();
        for step in StepId::ALL {
            table.get(step).validate().unwrap();
        }
    }

    #[test]
    fn step_ids_round_trip_through_strings() {
        for step in StepId::ALL {
            assert_eq!(step.as_str().parse::<StepId>().unwrap(), step);
            let json = serde_json::to_string(&step).unwrap();
            assert_eq!(json, format!("\"{}\"", step.as_str()));
        }
        assert!("persona_x".parse::<StepId>().is_err());
    }

    #[test]
    fn rejects_out_of_range_overrides() {
        let mut table = SettingsTable::default();
        assert!(table
            .set(StepId::Persona, GenSettings::new(2.5, 1.0, 0.0, 0.0, 10))
            .is_err());
        assert!(table
            .set(StepId::Persona, GenSettings::new(0.5, 1.0, 0.0, 0.0, 0))
            .is_err());
        assert!(table
            .set(StepId::Persona, GenSettings::new(0.5, 1.0, -2.0, 2.0, 1))
            .is_ok());
    }
}
