//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier};
use std::time::{Duration, Instant};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use forge_core::eval::EvalResult;
use forge_core::expert::{Experts, IterationPlan, LoopConfig, LoopPlan, NoFurtherInformation, PlannedStep};
use forge_core::foundry::{
    dedup_complaints, deidentify_dialogue, FixedClock, ReviewDecision, ReviewError, ReviewStore, RuleSet, Similarity,
    WordJaccard,
};
use forge_core::gateway::{Gateway, MockScript, Reply};
use forge_core::mixer::{init_mixer, sample_ratios, update, Normalization, RewardEvent};
use forge_core::model::sft::{parse_target, render_target};
use forge_core::model::{
    read_records, write_records, Decision, DialogueRecord, FoundryItem, Gender, Label, OptionMap, PreferenceMeta,
    PreferenceRecord, QuestionSeed, Record, ReviewStatus, SeedSource, SftRecord, Speaker, Turn, NONE_OF_THE_ABOVE,
};
use forge_core::preference::{build_group, build_pair, PrefsConfig, ScoredResponse};
use forge_core::questions::{narrate_first_person, Outcome};

type Verdict = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn report(name: &str, check: fn() -> Verdict) {
    let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let line = match &result {
        Ok(detail) => format!("PASS {name}: {detail}\n"),
        Err(why) => format!("FAIL {name}: {why}\n"),
    };
    // Straight to the process stdout so the line survives output capture.
    let _ = std::io::stdout().write_all(line.as_bytes());
    if let Err(why) = result {
        panic!("{name}: {why}");
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load<T: Record>(path: &Path) -> Vec<T> {
    read_records(path).unwrap().collect::<Result<Vec<_>, _>>().unwrap()
}

fn forge(args: &[&str]) -> i32 {
    forge_cli::run(std::iter::once("forge").chain(args.iter().copied()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn mock_config(dir: &Path, backends: &[(&str, &MockScript)], roles: Value) -> PathBuf {
    let mut list = Vec::new();
    for (id, script) in backends {
        let file = format!("{id}.script.json");
        write_json(&dir.join(&file), script);
        list.push(json!({"id": id, "kind": "mock", "script": file}));
    }
    let path = dir.join("forge.json");
    write_json(&path, &json!({"backends": list, "roles": roles}));
    path
}

fn snapshot(dir: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .filter(|p| !skip.iter().any(|s| p.to_string_lossy().ends_with(s)))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];

/// Splits a serialized target by hand, independently of the crate's parser.
fn split_target(target: &str) -> Option<(&str, &str)> {
    let body = target.strip_prefix("<think>")?.strip_suffix("</answer>")?;
    let (think, answer) = body.split_once("</think><answer>")?;
    let clean = |s: &str| !s.trim().is_empty() && TAGS.iter().all(|t| !s.contains(t));
    (clean(think) && clean(answer)).then_some((think, answer))
}

// ---------------------------------------------------------------- synthesis

fn seed_plan(seed: &QuestionSeed, wrong: bool, two_rounds: bool) -> LoopPlan {
    let correct = seed.correct_text().to_string();
    let others: Vec<String> = seed
        .options
        .texts()
        .filter(|t| *t != correct)
        .map(str::to_string)
        .collect();
    let diagnosis = if wrong { others[0].clone() } else { correct.clone() };
    let mut ranking = vec![diagnosis.clone()];
    ranking.extend(seed.options.texts().filter(|t| **t != diagnosis).map(str::to_string));
    let steps = |round: &str| {
        vec![
            PlannedStep::new(
                format!(
                    "{round}the leading features narrow the differential toward {} rather than {}",
                    correct.to_lowercase(),
                    others[1].to_lowercase()
                ),
                "Sound use of the key findings",
                1,
            ),
            PlannedStep::new(
                format!("{round}a purely functional explanation would account for every finding in this case"),
                "This ignores the objective findings",
                0,
            ),
            PlannedStep::new(
                format!(
                    "{round}the time course and examination fit {} better than {}",
                    correct.to_lowercase(),
                    others[0].to_lowercase()
                ),
                "Correct weighting of the history",
                1,
            ),
        ]
    };
    let mut iterations = Vec::new();
    if two_rounds {
        iterations.push(IterationPlan {
            hypotheses: seed.options.texts().map(str::to_string).collect(),
            steps: steps(""),
            ranking: ranking.clone(),
            diagnosis: None,
            knowledge_request: Some("any imaging results?".into()),
        });
    }
    iterations.push(IterationPlan {
        hypotheses: seed.options.texts().map(str::to_string).collect(),
        steps: steps(if two_rounds { "on review " } else { "" }),
        ranking,
        diagnosis: Some(diagnosis),
        knowledge_request: None,
    });
    LoopPlan {
        facts: seed.stem.split(". ").map(str::to_string).collect(),
        iterations,
    }
}

fn monologue(plan: &LoopPlan) -> String {
    let accepted: Vec<&str> = plan
        .iterations
        .iter()
        .flat_map(|i| &i.steps)
        .filter(|s| s.rating == 1)
        .map(|s| s.content.as_str())
        .collect();
    let links = ["Then", "Furthermore", "However", "So"];
    let mut out = format!("First, {}.", accepted[0]);
    for (i, step) in accepted[1..].iter().enumerate() {
        out.push_str(&format!(" {} {}.", links[i % links.len()], step));
    }
    let answer = plan.iterations.last().unwrap().diagnosis.as_deref().unwrap();
    out.push_str(&format!(" Therefore the most likely diagnosis is {answer}."));
    format!("<Monologue>{out}</Monologue>")
}

fn run_pipeline(dir: &Path, config: &Path, seeds: &Path) -> Result<(), String> {
    let c = config.to_str().unwrap();
    let s = seeds.to_str().unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: [Vec<String>; 4] = [
        vec![
            "rewrite".into(),
            "--seeds".into(),
            s.into(),
            "--out".into(),
            p("open.jsonl"),
        ],
        vec![
            "synth".into(),
            "--seeds".into(),
            s.into(),
            "--open".into(),
            p("open.jsonl"),
            "--gt-guided".into(),
            "--out".into(),
            p("traces.jsonl"),
        ],
        vec![
            "narrate".into(),
            "--traces".into(),
            p("traces.jsonl"),
            "--seeds".into(),
            s.into(),
            "--open".into(),
            p("open.jsonl"),
            "--out".into(),
            p("narrations.jsonl"),
        ],
        vec![
            "emit-sft".into(),
            "--narrations".into(),
            p("narrations.jsonl"),
            "--traces".into(),
            p("traces.jsonl"),
            "--seeds".into(),
            s.into(),
            "--open".into(),
            p("open.jsonl"),
            "--out".into(),
            p("sft.jsonl"),
        ],
    ];
    for args in steps {
        let mut argv = vec!["--config", c];
        argv.extend(args.iter().map(String::as_str));
        let code = forge(&argv);
        ensure!(code == 0, "`forge {}` exited {code}", args[0]);
    }
    Ok(())
}

fn synthesis() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let seeds_path = fixture("seeds.jsonl");
    let seeds: Vec<QuestionSeed> = load(&seeds_path);
    ensure!(seeds.len() == 25, "expected 25 bundled seeds, found {}", seeds.len());
    let loop_cfg = LoopConfig {
        max_iterations: 4,
        max_knowledge_requests: 2,
        steps_per_iteration: 8,
        gt_guided: true,
        ..LoopConfig::new("reasoner", "reflector")
    };
    let [mut rewriter, mut reasoner, mut reflector, mut narrator]: [MockScript; 4] = Default::default();
    for (i, seed) in seeds.iter().enumerate() {
        let open = seed.stem.replace(
            "Which of the following is the most likely diagnosis?",
            "What is the most likely diagnosis?",
        );
        rewriter.push_session(&seed.id, [Reply::text(format!("<Question>{open}</Question>"))]);
        let plan = seed_plan(seed, i % 8 == 5, i % 6 == 2);
        let (reasoning, reflection) = plan.replies(&loop_cfg);
        reasoner.push_session(&seed.id, reasoning);
        reflector.push_session(&seed.id, reflection);
        narrator.push_session(&seed.id, [Reply::text(monologue(&plan))]);
    }
    let config = mock_config(
        dir.path(),
        &[
            ("rewriter", &rewriter),
            ("reasoner", &reasoner),
            ("reflector", &reflector),
            ("narrator", &narrator),
        ],
        json!({"rewriter": "rewriter", "reasoning": "reasoner", "reflection": "reflector", "narrator": "narrator"}),
    );

    let started = Instant::now();
    run_pipeline(dir.path(), &config, &seeds_path)?;
    let elapsed = started.elapsed();
    let first = snapshot(dir.path(), &[".script.json", "forge.json"]);
    run_pipeline(dir.path(), &config, &seeds_path)?;
    let second = snapshot(dir.path(), &[".script.json", "forge.json"]);
    ensure!(
        first.len() >= 8,
        "expected outputs and manifests, found {:?}",
        first.keys()
    );
    for (name, bytes) in &first {
        ensure!(second.get(name) == Some(bytes), "{name} differs between runs");
    }

    let text = String::from_utf8(first["sft.jsonl"].clone()).unwrap();
    let mut n = 0;
    for line in text.lines() {
        let rec: SftRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let target = rec.target();
        let parts = split_target(&target);
        ensure!(
            parts == Some((rec.think.as_str(), rec.answer.as_str())),
            "target off-grammar: {target}"
        );
        n += 1;
    }
    ensure!(n >= 20, "only {n} SFT records");
    ensure!(elapsed < Duration::from_secs(60), "pipeline took {elapsed:?}");
    Ok(format!(
        "{n} SFT records from 25 seeds, two runs byte-identical, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

#[test]
fn c1_end_to_end_synthesis() {
    report("end-to-end synthesis", synthesis);
}

// ---------------------------------------------------------------- expert loop

const GT: &str = "GTMARK-focal-crackles-right-base";

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    const POOL: [&str; 16] = [
        "fever",
        "cough",
        "sputum",
        "crackles",
        "imaging",
        "history",
        "onset",
        "pain",
        "tenderness",
        "pulse",
        "pressure",
        "labs",
        "smear",
        "culture",
        "exposure",
        "course",
    ];
    (0..n).map(|_| *POOL.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn expert_loop() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0200);
    let seed = QuestionSeed {
        id: "fz".into(),
        source: SeedSource::Synthetic,
        stem: "Fever, productive cough and focal chest signs. What is the most likely diagnosis?".into(),
        options: OptionMap::from_texts(["lobar pneumonia", "asthma", "pulmonary embolism"]),
        correct_label: "A".parse().unwrap(),
        ground_truth: GT.into(),
        difficulty: Default::default(),
    };
    let (mut gt_reflection, mut narrated, mut leaky_blocked) = (0usize, 0usize, 0usize);
    for run in 0..200 {
        let cfg = LoopConfig {
            max_iterations: rng.random_range(1..=4),
            max_knowledge_requests: rng.random_range(0..=2),
            steps_per_iteration: rng.random_range(1..=4),
            gt_guided: rng.random_bool(0.5),
            ..LoopConfig::new("r", "f")
        };
        let limit = cfg.max_iterations.min(cfg.max_knowledge_requests + 1);
        let exhaust = rng.random_bool(0.2);
        let n_iter = if exhaust { limit } else { rng.random_range(1..=limit) };
        let iterations = (0..n_iter)
            .map(|it| {
                let steps = (0..rng.random_range(1..=cfg.steps_per_iteration))
                    .map(|j| {
                        let content = format!("mark{run}x{it}x{j} {}", words(&mut rng, 9));
                        PlannedStep::new(content, words(&mut rng, 4), rng.random_range(0..=1))
                    })
                    .collect();
                let last = it + 1 == n_iter;
                IterationPlan {
                    hypotheses: vec!["lobar pneumonia".into(), "asthma".into()],
                    steps,
                    ranking: vec!["lobar pneumonia".into(), "asthma".into()],
                    diagnosis: (last && !exhaust).then(|| "lobar pneumonia".into()),
                    knowledge_request: Some("any imaging?".into()),
                }
            })
            .collect();
        let plan = LoopPlan {
            facts: vec![words(&mut rng, 3)],
            iterations,
        };
        let (reasoning, reflection) = plan.replies(&cfg);
        let script = |default| MockScript {
            default,
            ..Default::default()
        };
        let gw = Gateway::new()
            .with_mock("r", script(reasoning))
            .with_mock("f", script(reflection));
        let trace = Experts::new(&gw, &cfg)
            .run_loop(&seed, None, &NoFurtherInformation)
            .map_err(|e| format!("run {run}: {e}"))?;
        let log = gw.prompt_log();
        ensure!(
            trace.iterations <= cfg.max_iterations,
            "run {run}: {} iterations",
            trace.iterations
        );
        ensure!(
            log.len() <= cfg.max_backend_calls(),
            "run {run}: {} calls over budget",
            log.len()
        );
        ensure!(trace.steps.iter().all(|s| s.rating <= 1), "run {run}: unrated step");
        let planned: usize = plan
            .iterations
            .iter()
            .map(|i| i.steps.len().min(cfg.steps_per_iteration))
            .sum();
        ensure!(
            trace.steps.len() == planned,
            "run {run}: {} steps, planned {planned}",
            trace.steps.len()
        );
        for entry in &log {
            let has_gt = entry.prompt.contains(GT);
            if entry.backend_id == "f" {
                ensure!(
                    has_gt == cfg.gt_guided,
                    "run {run}: reflection prompt GT presence {has_gt}"
                );
                gt_reflection += usize::from(has_gt);
            } else {
                ensure!(!has_gt, "run {run}: ground truth leaked into a reasoning prompt");
            }
        }

        let accepted: Vec<&str> = trace.accepted_steps().map(|s| s.content.as_str()).collect();
        let rejected: Vec<&str> = trace
            .rejected_steps()
            .map(|s| s.content.split_whitespace().next().unwrap())
            .collect();
        if accepted.is_empty() || trace.final_answer.is_empty() {
            continue;
        }
        let leaky = !rejected.is_empty() && rng.random_bool(0.5);
        let mut sentences: Vec<String> = trace
            .steps
            .iter()
            .filter(|s| s.rating == 1 || leaky)
            .map(|s| format!("Then {}.", s.content))
            .collect();
        sentences.push(format!("So the answer is {}.", trace.final_answer));
        let reply = format!("<Monologue>{}</Monologue>", sentences.join(" "));
        let narrator = Gateway::new().with_mock("n", MockScript::queue([reply.clone(), reply]));
        let outcome =
            narrate_first_person(&narrator, "n", &trace, &seed.stem).map_err(|e| format!("run {run}: {e}"))?;
        for entry in narrator.prompt_log() {
            ensure!(
                rejected.iter().all(|m| !entry.prompt.contains(m)),
                "run {run}: rating-0 step in a narration prompt"
            );
        }
        match outcome {
            Outcome::Accepted(think) => {
                ensure!(
                    rejected.iter().all(|m| !think.contains(m)),
                    "run {run}: rating-0 step narrated"
                );
                narrated += 1;
            }
            Outcome::Rejected(_) => leaky_blocked += usize::from(leaky),
        }
    }
    ensure!(
        narrated > 0 && leaky_blocked > 0,
        "fuzz too narrow: {narrated} narrated, {leaky_blocked} leaks blocked"
    );
    Ok(format!(
        "200 runs in budget; {gt_reflection} GT-bearing reflection prompts, 0 in reasoning; {narrated} narrations clean, {leaky_blocked} leaking narrations refused"
    ))
}

#[test]
fn c2_dual_expert_loop() {
    report("dual-expert loop", expert_loop);
}

// ---------------------------------------------------------------- preferences

fn pref_seed() -> QuestionSeed {
    QuestionSeed {
        id: "pg".into(),
        source: SeedSource::Synthetic,
        stem: "A 60-year-old with crushing chest pain and ST elevation. What is the most likely diagnosis?".into(),
        options: OptionMap::from_texts([
            "Acute myocardial infarction",
            "Acute pericarditis",
            "Aortic dissection",
            "Pulmonary embolism",
        ]),
        correct_label: "A".parse().unwrap(),
        ground_truth: "ST elevation with crushing pain".into(),
        difficulty: Default::default(),
    }
}

fn oracle_pair(correct: Label, responses: &[(Option<Label>, u8)]) -> Option<(usize, usize)> {
    let good: Vec<usize> = (0..responses.len())
        .filter(|&i| responses[i].0 == Some(correct))
        .collect();
    let bad: Vec<usize> = (0..responses.len())
        .filter(|&i| responses[i].0.is_some_and(|l| l != correct))
        .collect();
    if good.is_empty() || bad.is_empty() {
        return None;
    }
    let mut chosen = good[0];
    for &i in &good {
        if responses[i].1 > responses[chosen].1 {
            chosen = i;
        }
    }
    let mut counts: Vec<(Label, usize, usize)> = Vec::new();
    for &i in &bad {
        let l = responses[i].0.unwrap();
        match counts.iter_mut().find(|c| c.0 == l) {
            Some(c) => c.1 += 1,
            None => counts.push((l, 1, i)),
        }
    }
    let modal = counts.iter().fold(counts[0], |m, c| if c.1 > m.1 { *c } else { m }).0;
    let mut rejected = usize::MAX;
    for &i in &bad {
        if responses[i].0 == Some(modal) && (rejected == usize::MAX || responses[i].1 < responses[rejected].1) {
            rejected = i;
        }
    }
    Some((chosen, rejected))
}

fn preferences() -> Verdict {
    let seed = pref_seed();
    let label = |c: char| -> Option<Label> { (c != '-').then(|| c.to_string().parse().unwrap()) };
    // Two incorrect labels tie at six votes each (B is seen first); A ties at 9
    // on indexes 3, 6 and 18; B ties at 3 on indexes 0 and 7.
    let group: [(char, u8); 20] = [
        ('B', 3),
        ('A', 7),
        ('C', 2),
        ('A', 9),
        ('B', 5),
        ('C', 1),
        ('A', 9),
        ('B', 3),
        ('C', 4),
        ('-', 0),
        ('A', 2),
        ('C', 6),
        ('B', 8),
        ('D', 0),
        ('A', 5),
        ('C', 3),
        ('B', 7),
        ('C', 3),
        ('A', 9),
        ('B', 6),
    ];
    let mut sampler = MockScript::default();
    let mut judge = MockScript::default();
    for (i, (l, score)) in group.iter().enumerate() {
        let answer = match label(*l) {
            Some(l) => seed.options.get(l).unwrap().to_string(),
            None => "cannot tell without more data".to_string(),
        };
        sampler.push_session(
            "pg",
            [Reply::text(format!(
                "<think>response {i} weighs the findings</think><answer>{answer}</answer>"
            ))],
        );
        if label(*l).is_some() {
            judge.push_session("pg", [Reply::text(format!("<Score>{score}</Score>"))]);
        }
    }
    let gw = Gateway::new().with_mock("s", sampler).with_mock("j", judge);
    let out = build_group(&gw, &PrefsConfig::new("s", "j"), &seed, &seed.stem).map_err(|e| e.to_string())?;
    let rec = out.record.ok_or("scripted group produced no pair")?;
    ensure!(
        rec.chosen.contains("response 3 "),
        "chosen `{}`, oracle says response 3",
        rec.chosen
    );
    ensure!(
        rec.rejected.contains("response 0 "),
        "rejected `{}`, oracle says response 0",
        rec.rejected
    );
    let a: Label = "A".parse().unwrap();
    let b: Label = "B".parse().unwrap();
    ensure!(
        (
            rec.meta.chosen_label,
            rec.meta.rejected_label,
            rec.meta.chosen_score,
            rec.meta.rejected_score
        ) == (a, b, 9.0, 3.0),
        "meta {:?}",
        rec.meta
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1000);
    let (mut mixed, mut pairs) = (0, 0);
    for g in 0..1000 {
        let k = rng.random_range(2..=20);
        let width = rng.random_range(2..=5);
        let correct = Label::from_index(rng.random_range(0..width)).unwrap();
        let responses: Vec<(Option<Label>, u8)> = (0..k)
            .map(|_| {
                let l = rng
                    .random_bool(0.9)
                    .then(|| Label::from_index(rng.random_range(0..width)).unwrap());
                (l, rng.random_range(0..=10))
            })
            .collect();
        let scored: Vec<ScoredResponse> = responses
            .iter()
            .enumerate()
            .map(|(index, (label, score))| ScoredResponse {
                index,
                text: format!("r{index}"),
                label: *label,
                score: f64::from(*score),
            })
            .collect();
        let expected = oracle_pair(correct, &responses);
        mixed += usize::from(expected.is_some());
        let got = build_pair(correct, "q", &scored);
        if let Some(p) = &got {
            pairs += 1;
            ensure!(
                p.meta.chosen_label == correct,
                "group {g}: chosen label {}",
                p.meta.chosen_label
            );
            ensure!(p.meta.rejected_label != correct, "group {g}: rejected label is correct");
        }
        let got = got.map(|p| (p.chosen, p.rejected));
        let want = expected.map(|(c, r)| (format!("r{c}"), format!("r{r}")));
        ensure!(got == want, "group {g}: got {got:?}, oracle {want:?}");
    }
    ensure!(pairs == mixed, "{pairs} pairs for {mixed} mixed groups");
    Ok(format!(
        "scripted group matches the oracle; {pairs} pairs for {mixed} mixed groups out of 1000"
    ))
}

#[test]
fn c3_preference_builder() {
    report("preference builder", preferences);
}

// ---------------------------------------------------------------- bandit

/// The update recurrence written out directly.
fn simulate(events: &[(usize, f64)], k: usize, eps: f64, eta: f64) -> Vec<f64> {
    let mut w = vec![1.0f64; k];
    let probs = |w: &[f64]| -> Vec<f64> {
        let total: f64 = w.iter().sum();
        w.iter().map(|x| (1.0 - k as f64 * eps) * x / total + eps).collect()
    };
    for &(i, r) in events {
        let p = probs(&w)[i];
        w[i] *= (eta * (r / p) / k as f64).exp();
    }
    probs(&w)
}

fn mix_run(dir: &Path, name: &str, events: &[RewardEvent]) -> Result<Vec<BTreeMap<String, f64>>, String> {
    let events_path = dir.join(format!("{name}.events.jsonl"));
    let out = dir.join(format!("{name}.schedule.jsonl"));
    write_records(&events_path, events).unwrap();
    let code = forge(&[
        "mix",
        "--events",
        events_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--phase-len",
        "50",
        "--epsilon",
        "0.05",
        "--eta",
        "0.1",
        "--raw-rewards",
    ]);
    ensure!(code == 0, "forge mix exited {code}");
    Ok(load::<forge_core::mixer::PhaseRatios>(&out)
        .into_iter()
        .map(|p| p.ratios)
        .collect())
}

fn stream(rewards: [f64; 2]) -> Vec<RewardEvent> {
    (0..500)
        .map(|i| RewardEvent {
            source_id: ["a", "b"][i % 2].into(),
            reward: rewards[i % 2],
            step: (i / 2) as u64,
        })
        .collect()
}

fn bandit() -> Verdict {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let skewed = mix_run(dir.path(), "skewed", &stream([0.9, 0.1]))?;
    let last = skewed.last().unwrap();
    let oracle = simulate(
        &(0..500).map(|i| (i % 2, [0.9, 0.1][i % 2])).collect::<Vec<_>>(),
        2,
        0.05,
        0.1,
    );
    ensure!(
        (last["a"] - oracle[0]).abs() < 1e-9,
        "final p_a {} vs recurrence {}",
        last["a"],
        oracle[0]
    );
    ensure!(last["a"] >= 0.70, "final dominant probability {}", last["a"]);

    let flat = mix_run(dir.path(), "flat", &stream([0.5, 0.5]))?;
    for (i, v) in flat.iter().enumerate() {
        ensure!(
            v.values().all(|p| (p - 0.5).abs() <= 0.01),
            "equal-reward phase {i} off uniform: {v:?}"
        );
    }
    for v in skewed.iter().chain(&flat) {
        let sum: f64 = v.values().sum();
        ensure!(
            (sum - 1.0).abs() <= 1e-12 && v.values().all(|p| *p >= 0.05 - 1e-12),
            "off simplex: {v:?}"
        );
    }

    let mut state = init_mixer(&["a", "b"], 0.0, 0.1)
        .unwrap()
        .with_normalization(Normalization::Identity)
        .unwrap();
    update(
        &mut state,
        &RewardEvent {
            source_id: "a".into(),
            reward: 1.0,
            step: 0,
        },
    )
    .unwrap();
    let e = 0.1f64.exp();
    let p = sample_ratios(&state);
    ensure!(
        (p[0] - e / (e + 1.0)).abs() <= 1e-12 && (p[1] - 1.0 / (e + 1.0)).abs() <= 1e-12,
        "single update {p:?}"
    );

    let elapsed = started.elapsed();
    ensure!(elapsed < Duration::from_secs(5), "bandit checks took {elapsed:?}");
    Ok(format!(
        "final p_dominant {:.4}; equal stream within 0.01 of uniform over {} phases; closed form to 1e-12; {:.2}s",
        last["a"],
        flat.len(),
        elapsed.as_secs_f64()
    ))
}

#[test]
fn c4_bandit() {
    report("bandit", bandit);
}

// ---------------------------------------------------------------- foundry

fn word_set(text: &str) -> HashSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (word_set(a), word_set(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

fn foundry() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let dialogues_path = fixture("dialogues.jsonl");
    let vocab_path = fixture("icd10.txt");
    let dialogues: Vec<DialogueRecord> = load(&dialogues_path);
    ensure!(dialogues.len() == 100, "expected 100 dialogues");
    let terms: Vec<String> = std::fs::read_to_string(&vocab_path)
        .unwrap()
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();

    let mut script = MockScript::default();
    for (i, d) in dialogues.iter().enumerate() {
        let diagnosis = &terms[i % terms.len()];
        let complaint = d
            .turns
            .iter()
            .find(|t| t.speaker == Speaker::Patient)
            .unwrap()
            .text
            .clone();
        let pool: Vec<&str> = (1..=24).map(|j| terms[(i + j) % terms.len()].as_str()).collect();
        script.push_session(
            &d.id,
            [
                Reply::text(format!(
                    "Chief complaint: {complaint}\nPresent illness: seen last week at Ruijin Hospital in Shanghai, phone 139-2222-3333\nPast history: not reported\nAllergy history: none known\nExams: vital signs; basic laboratory panel\nDiagnosis: {diagnosis}"
                )),
                Reply::text(format!(
                    "<Question>A {}-year-old patient describes the complaint recorded above. What is the most likely diagnosis?</Question>",
                    d.patient.age
                )),
                Reply::text(format!("<Options>\n{}\n</Options>", pool.join("\n"))),
            ],
        );
    }
    let config = mock_config(dir.path(), &[("foundry", &script)], json!({"foundry": "foundry"}));
    let items_path = dir.path().join("items.jsonl");
    let prompts = dir.path().join("prompts.jsonl");
    let code = forge(&[
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "11",
        "--prompt-log",
        prompts.to_str().unwrap(),
        "foundry",
        "build",
        "--dialogues",
        dialogues_path.to_str().unwrap(),
        "--out",
        items_path.to_str().unwrap(),
        "--vocab",
        vocab_path.to_str().unwrap(),
    ]);
    ensure!(code == 0, "forge foundry build exited {code}");
    let items: Vec<FoundryItem> = load(&items_path);
    let drops: Vec<Value> = std::fs::read_to_string(dir.path().join("items.drops.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let rejections = std::fs::read_to_string(dir.path().join("items.rejections.jsonl"))
        .unwrap()
        .lines()
        .count();
    ensure!(
        items.len() + drops.len() + rejections == 100,
        "{} items + {} drops + {rejections} rejections",
        items.len(),
        drops.len()
    );
    ensure!(
        !items.is_empty() && !drops.is_empty(),
        "fixture should both keep and drop dialogues"
    );

    for item in &items {
        ensure!(item.options.len() == 21, "{}: {} options", item.id, item.options.len());
        let distinct: HashSet<String> = item.options.iter().map(|o| o.to_lowercase()).collect();
        ensure!(distinct.len() == 21, "{}: repeated option", item.id);
        ensure!(
            item.options[20] == NONE_OF_THE_ABOVE,
            "{}: last option `{}`",
            item.id,
            item.options[20]
        );
        ensure!(
            item.answer_index < 20,
            "{}: answer index {}",
            item.id,
            item.answer_index
        );
        let answer = &item.emr.diagnosis;
        let hits = item.options.iter().filter(|o| o.eq_ignore_ascii_case(answer)).count();
        ensure!(
            hits == 1 && item.options[item.answer_index].eq_ignore_ascii_case(answer),
            "{}: answer placement",
            item.id
        );
    }

    let rules = RuleSet::builtin();
    let phi = ["Ruijin", "Shanghai", "139-2222-3333", "Huashan", "Zhang Wei", "Li Na"];
    for item in &items {
        let text = serde_json::to_string(item).unwrap();
        if let Some(m) = rules.find_match(&text) {
            return Err(format!("{}: rule {} matches `{}`", item.id, m.rule, m.text));
        }
        ensure!(
            phi.iter().all(|p| !text.contains(p)),
            "{}: identifier survived",
            item.id
        );
    }
    let log = std::fs::read_to_string(&prompts).unwrap();
    let mut n_prompts = 0;
    for line in log.lines() {
        let prompt = serde_json::from_str::<Value>(line).unwrap()["prompt"]
            .as_str()
            .unwrap()
            .to_string();
        if let Some(m) = rules.find_match(&prompt) {
            return Err(format!("logged prompt: rule {} matches `{}`", m.rule, m.text));
        }
        ensure!(phi.iter().all(|p| !prompt.contains(p)), "identifier in a logged prompt");
        n_prompts += 1;
    }

    let dropped: HashSet<&str> = drops.iter().map(|d| d["id"].as_str().unwrap()).collect();
    let kept: Vec<String> = dialogues
        .iter()
        .filter(|d| !dropped.contains(d.id.as_str()))
        .map(|d| deidentify_dialogue(d, &rules).opening_complaint().to_string())
        .collect();
    for (i, a) in kept.iter().enumerate() {
        for b in &kept[i + 1..] {
            ensure!(jaccard(a, b) < 0.8, "kept pair at {:.3}: `{a}` / `{b}`", jaccard(a, b));
        }
    }

    let (x, y) = ("headache for 3 days", "headache for three days");
    let sim = WordJaccard::default().similarity(x, y);
    ensure!(
        sim == 3.0 / 5.0 && jaccard(x, y) == 3.0 / 5.0,
        "worked example similarity {sim}"
    );
    let record = |id: &str, text: &str| DialogueRecord {
        id: id.into(),
        department: "neurology".into(),
        patient: forge_core::model::Patient {
            age: 30,
            gender: Gender::Female,
        },
        turns: vec![Turn {
            speaker: Speaker::Patient,
            text: text.into(),
        }],
    };
    let dedup = dedup_complaints(vec![record("h1", x), record("h2", y)], 0.5, &WordJaccard::default()).unwrap();
    ensure!(
        dedup.kept.len() == 1
            && dedup.kept[0].id == "h1"
            && dedup.dropped[0].id == "h2"
            && dedup.dropped[0].similarity == 0.6,
        "worked example dedup {:?}",
        dedup.dropped
    );

    let stats_out = dir.path().join("stats.json");
    let stats_items = fixture("stats_items.jsonl");
    let code = forge(&[
        "stats",
        "--items",
        stats_items.to_str().unwrap(),
        "--out",
        stats_out.to_str().unwrap(),
    ]);
    ensure!(code == 0, "forge stats exited {code}");
    let stats: Value = serde_json::from_str(&std::fs::read_to_string(&stats_out).unwrap()).unwrap();
    let fixture_items: Vec<FoundryItem> = load(&stats_items);
    let share = |g: Gender| {
        100.0 * fixture_items.iter().filter(|i| i.patient.gender == g).count() as f64 / fixture_items.len() as f64
    };
    let (male, female) = (
        stats["male"]["percent"].as_f64().unwrap(),
        stats["female"]["percent"].as_f64().unwrap(),
    );
    ensure!(
        format!("{male:.2}/{female:.2}") == "58.00/42.00"
            && male == share(Gender::Male)
            && female == share(Gender::Female),
        "stats gave {male}/{female}"
    );

    Ok(format!(
        "{} items, {} duplicates dropped, {rejections} rejected; 0 identifier matches over items and {n_prompts} prompts; 3/5 example exact; 58.00%/42.00%",
        items.len(),
        drops.len()
    ))
}

#[test]
fn c5_foundry() {
    report("foundry", foundry);
}

// ---------------------------------------------------------------- review

fn review_item() -> FoundryItem {
    let mut item = load::<FoundryItem>(&fixture("stats_items.jsonl")).remove(0);
    item.review = Default::default();
    item
}

fn decision(item: &str, tier: u8, verdict: Decision, version: u64) -> ReviewDecision {
    ReviewDecision {
        item_id: item.into(),
        tier,
        reviewer_id: format!("rev-{tier}"),
        decision: verdict,
        criterion: (verdict == Decision::Reject).then(|| "diagnostic-error".into()),
        note: String::new(),
        expected_version: version,
    }
}

fn review() -> Verdict {
    let id = review_item().id;
    let mut transitions = 0;
    for tier in 1..=3u8 {
        for verdict in [Decision::Approve, Decision::Reject] {
            let store = ReviewStore::new([review_item()]).with_clock(FixedClock(1_000));
            for t in 1..tier {
                store
                    .decide(&decision(&id, t, Decision::Approve, u64::from(t - 1)))
                    .map_err(|e| e.to_string())?;
            }
            for other in (1..=3u8).filter(|t| *t != tier) {
                let r = store.decide(&decision(&id, other, verdict, u64::from(tier - 1)));
                ensure!(
                    matches!(r, Err(ReviewError::InvalidTransition(_))),
                    "tier {other} decided on a tier-{tier} item: {r:?}"
                );
            }
            let after = store
                .decide(&decision(&id, tier, verdict, u64::from(tier - 1)))
                .map_err(|e| e.to_string())?;
            let want = match (tier, verdict) {
                (3, Decision::Approve) => (3, ReviewStatus::Final),
                (t, Decision::Approve) => (t + 1, ReviewStatus::Pending),
                (t, Decision::Reject) => (t, ReviewStatus::Rejected),
            };
            ensure!(
                (after.review.tier, after.review.status) == want,
                "tier {tier} {verdict:?} gave {:?}",
                after.review
            );
            ensure!(
                after.review.version == u64::from(tier) && after.review.history.len() == usize::from(tier),
                "history/version"
            );
            if verdict == Decision::Reject {
                ensure!(
                    after.review.history.last().unwrap().criterion.as_deref() == Some("diagnostic-error"),
                    "criterion not recorded"
                );
            }
            if after.review.status != ReviewStatus::Pending {
                for t in 1..=3u8 {
                    let r = store.decide(&decision(&id, t, Decision::Approve, after.review.version));
                    ensure!(
                        matches!(r, Err(ReviewError::InvalidTransition(_))),
                        "terminal item accepted a decision"
                    );
                }
            }
            if after.review.status == ReviewStatus::Final {
                let h = &after.review.history;
                ensure!(
                    h.iter().map(|e| (e.tier, e.decision)).collect::<Vec<_>>()
                        == [(1, Decision::Approve), (2, Decision::Approve), (3, Decision::Approve)]
                        && h.windows(2).all(|w| w[0].timestamp <= w[1].timestamp),
                    "final history {h:?}"
                );
                after.validate().map_err(|e| e.to_string())?;
            }
            transitions += 1;
        }
    }

    let store = Arc::new(ReviewStore::new([review_item()]));
    let barrier = Arc::new(Barrier::new(50));
    let handles: Vec<_> = (0..50)
        .map(|i| {
            let (store, barrier, id) = (store.clone(), barrier.clone(), id.clone());
            std::thread::spawn(move || {
                let verdict = if i % 2 == 0 {
                    Decision::Approve
                } else {
                    Decision::Reject
                };
                barrier.wait();
                store.decide(&decision(&id, 1, verdict, 0))
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let conflicts = results
        .iter()
        .filter(|r| matches!(r, Err(ReviewError::Conflict { .. })))
        .count();
    ensure!((ok, conflicts) == (1, 49), "{ok} successes, {conflicts} conflicts");
    let stored = store.get(&id).unwrap();
    ensure!(
        stored.review.version == 1 && stored.review.history.len() == 1,
        "stored {:?}",
        stored.review
    );
    Ok(format!(
        "{transitions} transitions match; 50 concurrent decisions gave 1 success and 49 conflicts"
    ))
}

#[test]
fn c6_review_state_machine() {
    report("review state machine", review);
}

// ---------------------------------------------------------------- eval

fn eval() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let items_path = fixture("eval_items.jsonl");
    let items: Vec<forge_core::eval::EvalItem> = load(&items_path);
    ensure!(items.len() == 1000, "expected 1000 items");
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(887));
    let wrong: HashSet<usize> = order[..113].iter().copied().collect();
    let mut script = MockScript::default();
    for (i, item) in items.iter().enumerate() {
        let label = if wrong.contains(&i) {
            item.options
                .iter()
                .map(|(l, _)| l)
                .find(|l| *l != item.correct_label)
                .unwrap()
        } else {
            item.correct_label
        };
        script.push_session(
            &item.id,
            [Reply::text(format!("<think>checking</think><answer>{label}</answer>"))],
        );
    }
    let config = mock_config(dir.path(), &[("sheet", &script)], json!({}));
    let out = dir.path().join("result.json");
    let code = forge(&[
        "--config",
        config.to_str().unwrap(),
        "eval",
        "--items",
        items_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--model",
        "answer-sheet",
    ]);
    ensure!(code == 0, "forge eval exited {code}");
    let result: EvalResult = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let expected = (items.len() - wrong.len()) as f64 / items.len() as f64;
    ensure!(
        result.n_correct == 887 && result.accuracy == expected,
        "accuracy {} ({} correct)",
        result.accuracy,
        result.n_correct
    );
    ensure!(
        format!("{:.4}", result.accuracy) == "0.8870",
        "rendered {:.4}",
        result.accuracy
    );
    ensure!(result.recomputed_accuracy() == result.accuracy, "item log disagrees");

    let mut paths = Vec::new();
    for (model, accuracy) in [("model-a", 0.8892), ("model-b", 0.7722), ("model-c", 0.8696)] {
        let path = dir.path().join(format!("{model}.json"));
        let r = EvalResult {
            benchmark: "MedQA".into(),
            model: model.into(),
            n_items: 10_000,
            n_correct: (accuracy * 10_000.0f64).round() as usize,
            accuracy,
            items: Vec::new(),
        };
        write_json(&path, &r);
        paths.push(path.to_string_lossy().into_owned());
    }
    let md = dir.path().join("report.md");
    let mut argv = vec!["report", "--out", md.to_str().unwrap(), "--results"];
    argv.extend(paths.iter().map(String::as_str));
    let code = forge(&argv);
    ensure!(code == 0, "forge report exited {code}");
    let table = std::fs::read_to_string(&md).unwrap();
    let row = |m: &str| table.lines().find(|l| l.contains(m)).unwrap_or_default().to_string();
    ensure!(row("model-a").contains("**0.8892**"), "0.8892 not bold:\n{table}");
    ensure!(
        row("model-c").contains("<u>0.8696</u>"),
        "0.8696 not underlined:\n{table}"
    );
    ensure!(row("model-b").contains("| 0.7722 |"), "0.7722 decorated:\n{table}");
    Ok("887/1000 -> 0.8870; report bolds 0.8892 and underlines 0.8696".into())
}

#[test]
fn c7_eval_harness() {
    report("eval harness", eval);
}

// ---------------------------------------------------------------- round trips

fn text(rng: &mut ChaCha8Rng, min: usize) -> String {
    const CHARS: &[char] = &[
        'a', 'b', 'z', 'Q', ' ', ' ', '\n', '\t', '"', '\\', '/', '>', '&', '{', '}', ',', ':', '0', '9', 'é', 'ß',
        'ж', '中', '文', '😀', '\u{7f}', '\u{1}',
    ];
    let n = rng.random_range(min..40);
    let mut s: String = (0..n).map(|_| *CHARS.choose(rng).unwrap()).collect();
    s.push('x');
    s
}

fn round_trips() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let dir = tempfile::tempdir().unwrap();

    let sft: Vec<SftRecord> = (0..1000)
        .map(|_| SftRecord {
            input: text(&mut rng, 0),
            think: text(&mut rng, 0),
            answer: text(&mut rng, 0),
        })
        .collect();
    let prefs: Vec<PreferenceRecord> = (0..1000)
        .map(|_| PreferenceRecord {
            input: text(&mut rng, 0),
            chosen: render_target(&text(&mut rng, 0), &text(&mut rng, 0)).unwrap(),
            rejected: render_target(&text(&mut rng, 0), &text(&mut rng, 0)).unwrap(),
            meta: PreferenceMeta {
                chosen_score: f64::from(rng.random_range(0..=10u8)),
                rejected_score: rng.random_range(0.0..10.0),
                chosen_label: "A".parse().unwrap(),
                rejected_label: Label::from_index(rng.random_range(1..21)).unwrap(),
                correct_label: "A".parse().unwrap(),
            },
        })
        .collect();

    fn jsonl_identity<T: Record + PartialEq + std::fmt::Debug>(path: &Path, records: &[T]) -> Result<(), String> {
        write_records(path, records).map_err(|e| e.to_string())?;
        let first = std::fs::read(path).unwrap();
        let back: Vec<T> = load(path);
        ensure!(back.len() == records.len(), "{} records came back", back.len());
        if let Some(i) = (0..back.len()).find(|&i| back[i] != records[i]) {
            return Err(format!("record {i} changed: {:?}", records[i]));
        }
        write_records(path, &back).map_err(|e| e.to_string())?;
        ensure!(std::fs::read(path).unwrap() == first, "re-serialization differs");
        Ok(())
    }
    jsonl_identity(&dir.path().join("sft.jsonl"), &sft)?;
    jsonl_identity(&dir.path().join("prefs.jsonl"), &prefs)?;

    for (i, r) in sft.iter().enumerate() {
        let target = render_target(&r.think, &r.answer).map_err(|e| format!("record {i}: {e}"))?;
        ensure!(
            parse_target(&target) == Ok((r.think.as_str(), r.answer.as_str())),
            "record {i}: parse(emit) differs"
        );
        ensure!(
            split_target(&target) == Some((r.think.as_str(), r.answer.as_str())),
            "record {i}: independent split differs"
        );
        let (t, a) = parse_target(&target).unwrap();
        ensure!(
            render_target(t, a).as_deref() == Ok(target.as_str()),
            "record {i}: emit(parse) differs"
        );
    }
    Ok("2 x 1000 JSONL records and 1000 targets round-trip exactly".into())
}

#[test]
fn c8_round_trips() {
    report("round trips", round_trips);
}

#[test]
fn acceptance_helpers_agree() {
    assert_eq!(jaccard("Headache, for 3 days", "headache for three days"), 0.6);
    assert_eq!(split_target("<think>a</think><answer>b</answer>"), Some(("a", "b")));
    assert_eq!(split_target("<think>a</think><answer></answer>"), None);
    assert_eq!(
        oracle_pair(
            "A".parse().unwrap(),
            &[(Some("B".parse().unwrap()), 1), (Some("A".parse().unwrap()), 2)]
        ),
        Some((1, 0))
    );
    let p = simulate(&[(0, 1.0)], 2, 0.0, 0.1);
    assert!((p[0] - 0.1f64.exp() / (0.1f64.exp() + 1.0)).abs() < 1e-15);
}
