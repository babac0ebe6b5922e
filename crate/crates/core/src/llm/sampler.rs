use std::sync::Mutex;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CompletionRequest, CompletionResult, Provider, ProviderError, RequestTag};
use crate::dsl::{self, BinOp, Builtin, Expr, ExprKind, RuleAst, UnaryOp};

/// Explanation paragraph the sampler attaches after every generated rule.
pub const SAMPLER_CONTEXT: &str = "Sampled from the rule grammar without domain guidance. \
The rule compares a transformed sensor channel against a fixed threshold.";

const REFLECTION_TEXT: &str = "Rules built on rolling z-scores of the measured channels separate \
faulty spans from normal operation better than raw thresholds. Prefer windows that cover \
at least an hour of data.";

const WINDOWS: [i64; 6] = [5, 10, 15, 30, 60, 120];
const ALPHAS: [f64; 3] = [0.05, 0.1, 0.3];
const THRESHOLDS: [f64; 10] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 10.0, 20.0];
const CONSTANTS: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 22.0];

fn num(v: f64) -> Expr {
    Expr::new(ExprKind::Number(v))
}

fn call(b: Builtin, args: Vec<Expr>) -> Expr {
    Expr::new(ExprKind::Call(b, args))
}

fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
    Expr::new(ExprKind::Binary(op, Box::new(l), Box::new(r)))
}

fn numeric<R: Rng>(rng: &mut R, features: &[&str], depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.3) {
        return Expr::new(ExprKind::Feature(features.choose(rng).unwrap().to_string()));
    }
    match rng.random_range(0..6) {
        0 | 1 => {
            let b = *[
                Builtin::Mean,
                Builtin::Std,
                Builtin::Rmin,
                Builtin::Rmax,
                Builtin::Lag,
                Builtin::Delta,
                Builtin::Zscore,
            ]
            .choose(rng)
            .unwrap();
            let inner = numeric(rng, features, depth - 1);
            call(b, vec![inner, num(*WINDOWS.choose(rng).unwrap() as f64)])
        }
        2 => {
            let inner = numeric(rng, features, depth - 1);
            call(Builtin::Ewma, vec![inner, num(*ALPHAS.choose(rng).unwrap())])
        }
        3 => call(Builtin::Abs, vec![numeric(rng, features, depth - 1)]),
        4 => {
            let op = *[BinOp::Add, BinOp::Sub, BinOp::Mul].choose(rng).unwrap();
            let l = numeric(rng, features, depth - 1);
            let r = if rng.random_bool(0.5) {
                num(*CONSTANTS.choose(rng).unwrap())
            } else {
                numeric(rng, features, depth - 1)
            };
            bin(op, l, r)
        }
        _ => {
            let l = numeric(rng, features, depth - 1);
            bin(BinOp::Div, l, num(*CONSTANTS.choose(rng).unwrap()))
        }
    }
}

fn comparison<R: Rng>(rng: &mut R, features: &[&str], depth: u32) -> Expr {
    let lhs = if rng.random_bool(0.5) {
        let inner = numeric(rng, features, depth.saturating_sub(1));
        call(Builtin::Zscore, vec![inner, num(*WINDOWS.choose(rng).unwrap() as f64)])
    } else {
        numeric(rng, features, depth)
    };
    let mut t = *THRESHOLDS.choose(rng).unwrap();
    if rng.random_bool(0.2) {
        t = -t;
    }
    let op = *[BinOp::Gt, BinOp::Gt, BinOp::Lt, BinOp::Ge].choose(rng).unwrap();
    bin(op, lhs, num(t))
}

fn boolean<R: Rng>(rng: &mut R, features: &[&str], depth: u32) -> Expr {
    match rng.random_range(0..10) {
        0 if depth > 1 => {
            let inner = boolean(rng, features, depth - 1);
            Expr::new(ExprKind::Unary(UnaryOp::Not, Box::new(inner)))
        }
        1 | 2 if depth > 1 => {
            let op = if rng.random_bool(0.5) { BinOp::And } else { BinOp::Or };
            let l = boolean(rng, features, depth - 1);
            let r = boolean(rng, features, depth - 1);
            bin(op, l, r)
        }
        _ => comparison(rng, features, depth),
    }
}

/// Draws a random boolean rule over `features`. Rules that would exceed the
/// node cap are redrawn, so the result always compiles against `features`.
pub fn sample_ast<R: Rng>(rng: &mut R, features: &[&str], depth_budget: u32) -> RuleAst {
    assert!(!features.is_empty(), "sampler needs at least one feature");
    loop {
        let ast = RuleAst::new(Vec::new(), boolean(rng, features, depth_budget.max(1)));
        if ast.node_count <= dsl::MAX_NODES {
            return ast;
        }
    }
}

pub fn sample_rule(seed: u64, features: &[&str], depth_budget: u32) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dsl::format(&sample_ast(&mut rng, features, depth_budget))
}

/// Offline provider that answers rule requests with grammar samples.
///
/// The output sequence depends only on the seed and the order of calls.
pub struct SamplerProvider {
    features: Vec<String>,
    depth: u32,
    rng: Mutex<ChaCha8Rng>,
}

impl SamplerProvider {
    pub fn new(seed: u64, features: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let features: Vec<String> = features.into_iter().map(Into::into).collect();
        assert!(!features.is_empty(), "sampler needs at least one feature");
        Self {
            features,
            depth: 3,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn with_depth(mut self, depth: u32) -> Self {
        self.depth = depth;
        self
    }
}

impl Provider for SamplerProvider {
    fn id(&self) -> &str {
        "sampler"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, ProviderError> {
        request.validate()?;
        let text = match request.tag {
            RequestTag::Narrate => request.user_prompt.clone(),
            RequestTag::Reflection => REFLECTION_TEXT.to_string(),
            RequestTag::Init | RequestTag::Crossover | RequestTag::Mutation => {
                let names: Vec<&str> = self.features.iter().map(String::as_str).collect();
                let mut rng = self.rng.lock().expect("sampler lock poisoned");
                let rule = dsl::format(&sample_ast(&mut *rng, &names, self.depth));
                format!("```\n{rule}\n```\n\n{SAMPLER_CONTEXT}")
            }
        };
        Ok(CompletionResult {
            text,
            provider_id: "sampler".into(),
            latency_ms: 0,
            attempt: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::compile;
    use proptest::prelude::*;

    const FEATS: [&str; 3] = ["zone_temp", "outdoor_temp", "damper_pos"];

    #[test]
    fn same_seed_same_rule() {
        assert_eq!(sample_rule(7, &FEATS, 3), sample_rule(7, &FEATS, 3));
        let distinct: std::collections::HashSet<String> =
            (0..20).map(|s| sample_rule(s, &FEATS, 3)).collect();
        assert!(distinct.len() > 10);
    }

    #[test]
    fn provider_wraps_rule_in_fence() {
        let p = SamplerProvider::new(1, FEATS);
        let r = p
            .complete(&CompletionRequest::new(RequestTag::Init, "s", "u"))
            .unwrap();
        assert!(r.text.starts_with("```\nreturn "));
        assert!(r.text.ends_with(SAMPLER_CONTEXT));
        let echo = p
            .complete(&CompletionRequest::new(RequestTag::Narrate, "s", "hello"))
            .unwrap();
        assert_eq!(echo.text, "hello");
    }

    proptest! {
        #[test]
        fn samples_always_compile(seed in any::<u64>(), depth in 1u32..6) {
            let src = sample_rule(seed, &FEATS, depth);
            let rule = compile(&src, FEATS.iter().copied());
            prop_assert!(rule.is_ok(), "{src}: {:?}", rule.err());
            prop_assert_eq!(rule.unwrap().result_type(), crate::dsl::SeriesType::Boolean);
        }
    }
}
