//! Render the built-in init prompt and round-trip a model response.

use std::collections::BTreeMap;

use pillm::prompts::{self, PromptId, PromptSet};
use pillm::synth::feature_meta;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let set = PromptSet::builtin();
    for id in PromptId::ALL {
        println!("{:<18} placeholders: {:?}", id.name(), set.get(id).placeholders());
    }

    let metas = feature_meta();
    let seed = prompts::seed_rule(&metas);
    let mut bindings = BTreeMap::new();
    bindings.insert("task_description", prompts::task_description(0.5));
    bindings.insert("input_feature_list", prompts::feature_list_text(&metas));
    bindings.insert("func_name", "rule".to_string());
    bindings.insert("seed_function", prompts::code_block(&seed));
    bindings.insert("context_template", prompts::context_block(prompts::SEED_CONTEXT));
    println!("\n--- init prompt ---\n{}", set.render(PromptId::Init, &bindings)?);

    let reply = "Here you go.\n```rule\nreturn zscore($zone_temp, 60) > 3\n```\n```context\nA biased sensor jumps away from its recent history.\n```";
    let parsed = prompts::parse_response(reply)?;
    println!("code: {}\ncontext: {}", parsed.code, parsed.context);
    Ok(())
}
