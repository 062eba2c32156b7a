use std::sync::OnceLock;

use episynth::config::PipelineConfig;
use episynth::pipeline::run_generate;
use episynth::store::{Episode, EpisodeStore};

/// A handful of mock-generated episodes, produced once per test binary.
pub fn episodes() -> &'static [Episode] {
    static CACHE: OnceLock<Vec<Episode>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut config = PipelineConfig::default();
        config.seed = 99;
        config.backends.mock = true;
        config.output = dir.path().join("episodes.jsonl");
        run_generate(&config, 6).unwrap();
        EpisodeStore::new(&config.output).read_all().unwrap()
    })
}

pub fn episode(i: usize, id: &str) -> Episode {
    let all = episodes();
    let mut ep = all[i % all.len()].clone();
    ep.episode_id = id.to_string();
    ep
}
