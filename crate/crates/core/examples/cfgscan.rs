use std::time::Instant;
use tclp_core::{solve, standard_corpus, AnswerPolicy, EngineConfig, ProjectionMode, Strategy};

fn rss_mb() -> f64 {
    let s = std::fs::read_to_string("/proc/self/status").unwrap_or_default();
    for line in s.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: f64 = rest
                .trim()
                .trim_end_matches(" kB")
                .parse()
                .unwrap_or(0.0);
            return kb / 1024.0;
        }
    }
    0.0
}

fn main() {
    let corpus = standard_corpus();
    let entry = corpus.iter().find(|e| e.name == "gap-reach").unwrap();
    for budget in [100u64, 200, 400, 800] {
        let cfg = EngineConfig {
            strategy: Strategy::Lp,
            answer_policy: AnswerPolicy::KeepAll,
            call_projection: ProjectionMode::Precise,
            answer_projection: ProjectionMode::Precise,
            budget,
        };
        let t = Instant::now();
        let res = solve(&entry.program, &entry.query, &cfg).unwrap();
        eprintln!(
            "budget {budget}: {:?} rss={:.0}MB transitions={} answers={}",
            t.elapsed(),
            rss_mb(),
            res.stats.transitions,
            res.rendered_answers().len()
        );
    }
}
