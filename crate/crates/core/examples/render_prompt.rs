//! Render one prompt to stdout without calling any backend.
//!
//! Usage: cargo run -p metaphor-eval --example render_prompt -- \
//!     [config.toml] [condition] [item_id]

use std::path::PathBuf;
use std::str::FromStr;

use metaphor_eval::config::Config;
use metaphor_eval::corpus::{assign_letters, LetterPolicy};
use metaphor_eval::pipeline;
use metaphor_eval::prompts::{Condition, PromptRenderer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let config_path = args.next().unwrap_or_else(|| "config.toml".into());
    let condition = Condition::from_str(&args.next().unwrap_or_else(|| "qud".into()))?;
    let item_id = args.next();

    let config = Config::load(&PathBuf::from(config_path))?;
    let inputs = pipeline::load_inputs(&config)?;
    let renderer = PromptRenderer::new(
        &inputs.corpus,
        &inputs.bank,
        &config.prompts.example_ids,
        &inputs.split,
        config.seeds.example_order,
    )?;
    let target_id = match &item_id {
        Some(id) => id.as_str(),
        None => inputs
            .split
            .ids(config.run.split)
            .first()
            .ok_or("configured split is empty")?,
    };
    let target = inputs.corpus.get(target_id).ok_or("unknown item id")?;
    let policy = match config.seeds.letters {
        Some(seed) => LetterPolicy::Shuffled(seed),
        None => LetterPolicy::AsGiven,
    };
    let letters = assign_letters(target, policy);
    let prompt = renderer.render(condition, target, &letters)?;
    println!("{}", prompt.text);
    Ok(())
}
