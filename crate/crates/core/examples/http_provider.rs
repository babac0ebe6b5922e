//! Sends one request through the chat-completions client.
//!
//! ```text
//! PILLM_API_KEY=... cargo run --example http_provider -- https://api.example.com/v1/chat/completions my-model
//! ```

use pillm::llm::{CompletionRequest, HttpConfig, HttpProvider, Provider, RequestTag, RetryPolicy};
use pillm::prompts::PromptSet;

fn main() {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let (Some(endpoint), Some(model)) = (args.next(), args.next()) else {
        eprintln!("usage: http_provider <endpoint> <model>");
        std::process::exit(2);
    };

    let cfg = HttpConfig { max_in_flight: 1, ..HttpConfig::new(endpoint, model) };
    let provider = match HttpProvider::from_env(cfg) {
        Ok(p) => p.with_retry(RetryPolicy { max_attempts: 3, ..RetryPolicy::default() }),
        Err(e) => {
            eprintln!("bad provider config: {e}");
            std::process::exit(3);
        }
    };

    let system = PromptSet::builtin().get(pillm::prompts::PromptId::GeneratorSystem).body().replace(
        "{task_description}",
        "Flag rows where the zone temperature sensor reads implausibly high",
    );
    let request = CompletionRequest::new(RequestTag::Init, system, "Write one rule using $zone_temp.").temperature(0.7);
    match provider.complete(&request) {
        Ok(r) => println!("[{} attempt {} in {} ms]\n{}", r.provider_id, r.attempt, r.latency_ms, r.text),
        Err(e) => {
            eprintln!("request failed: {e}");
            std::process::exit(1);
        }
    }
}
