use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use claimlens_core::bundle::{train_bundle, BundleSpec, ModelBundle};
use claimlens_core::config::Config;
use claimlens_core::corpus::{
    generate_corpus, generate_kb, load_corpus, load_kb, load_schema, load_transcript, save_corpus,
    save_kb, save_schema, GeneratorConfig, KbGenConfig, NoiseConfig, NoiseOp, ReportSchema,
};
use claimlens_core::evalkit::{run_experiment, split_corpus, ExperimentConfig};
use claimlens_core::filtering::QidMode;
use claimlens_core::neural::TrainConfig;
use claimlens_core::segmentation::StandardQuestionSet;
use claimlens_core::selfcheck::{gradient_suite, single_edit_failures};
use claimlens_core::service::{ServiceOptions, SessionManager};
use claimlens_core::tracker::{process_utterance, snapshot, LogRecord, SessionState};

use crate::{Cli, Command, Format, ModeArg};

struct Ctx {
    config: Config,
    root: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(p) => {
                Config::load(p).with_context(|| format!("loading config {}", p.display()))?
            }
            None => Config::default(),
        };
        let root = cli.data_dir.clone().unwrap_or_else(|| config.data_root());
        Ok(Ctx { config, root })
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    fn schema(&self) -> Result<ReportSchema> {
        let p = self.path(&self.config.paths.schema);
        load_schema(&p).with_context(|| format!("loading schema {}", p.display()))
    }

    fn schema_at(&self, p: Option<&Path>) -> Result<ReportSchema> {
        match p {
            Some(p) => load_schema(p).with_context(|| format!("loading schema {}", p.display())),
            None => self.schema(),
        }
    }

    fn questions(&self, schema: &ReportSchema) -> Result<StandardQuestionSet> {
        let p = self.path(&self.config.paths.questions);
        if p.exists() {
            StandardQuestionSet::load(schema, &p)
                .with_context(|| format!("loading questions {}", p.display()))
        } else {
            Ok(StandardQuestionSet::default_for(schema)?)
        }
    }

    fn bundle(&self, p: Option<&Path>) -> Result<ModelBundle> {
        let p = p
            .map(Path::to_path_buf)
            .unwrap_or_else(|| self.path(&self.config.paths.bundle));
        ModelBundle::load(&p).with_context(|| format!("loading bundle {}", p.display()))
    }

    fn corpus(&self) -> Result<Vec<claimlens_core::corpus::GoldCase>> {
        let p = self.path(&self.config.paths.corpus);
        load_corpus(&p).with_context(|| format!("loading corpus {}", p.display()))
    }
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Gen {
            dialogues,
            negation_rate,
            noise,
            seed,
            kb_size,
        } => gen(&ctx, dialogues, negation_rate, noise, seed, kb_size),
        Command::Train { modes, epochs, out } => train(&ctx, &modes, epochs, out),
        Command::Run {
            transcript,
            bundle,
            no_dst,
            snapshot,
        } => run(&ctx, &transcript, bundle.as_deref(), no_dst, snapshot),
        Command::Eval {
            bundle,
            no_dst,
            no_baseline,
            format,
            out,
        } => eval(&ctx, bundle.as_deref(), no_dst, no_baseline, format, out),
        Command::Serve {
            port,
            bundle,
            schema,
            sessions,
        } => serve(&ctx, port, bundle, schema, sessions),
        Command::Check { seeds } => check(seeds),
    }
}

fn gen(
    ctx: &Ctx,
    dialogues: usize,
    negation_rate: f64,
    noise: f64,
    seed: u64,
    kb_size: usize,
) -> Result<ExitCode> {
    let schema = ReportSchema::default_schema();
    let kb = generate_kb(&KbGenConfig {
        per_type: kb_size,
        seed,
        ..KbGenConfig::default()
    })?;
    let sq = StandardQuestionSet::default_for(&schema)?;
    let noise = NoiseConfig::new(
        noise,
        &[NoiseOp::Substitute, NoiseOp::Delete, NoiseOp::Insert],
        seed,
    )?;
    let cases = generate_corpus(
        &schema,
        &kb,
        &GeneratorConfig::new(dialogues, negation_rate, noise, seed),
    )?;
    let p = &ctx.config.paths;
    save_schema(&ctx.path(&p.schema), &schema)?;
    save_kb(&ctx.path(&p.kb), &kb)?;
    sq.save(&ctx.path(&p.questions))?;
    save_corpus(&ctx.path(&p.corpus), &cases)?;
    println!(
        "wrote {} dialogues, {} knowledge-base entries to {}",
        cases.len(),
        kb.len(),
        ctx.root.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn mode(m: ModeArg) -> QidMode {
    match m {
        ModeArg::Single => QidMode::Single,
        ModeArg::Mtl => QidMode::Mtl,
        ModeArg::Adv => QidMode::AdvMtl,
    }
}

fn train(
    ctx: &Ctx,
    modes: &[ModeArg],
    epochs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let schema = ctx.schema()?;
    let kb_path = ctx.path(&ctx.config.paths.kb);
    let kb = load_kb(&kb_path).with_context(|| format!("loading kb {}", kb_path.display()))?;
    let cases = ctx.corpus()?;
    let (train, test) = split_corpus(&cases, ctx.config.models.test_fraction);
    if train.is_empty() {
        bail!("no training dialogues after holding out the test split");
    }
    let mut spec: BundleSpec = ctx.config.models.spec();
    if !modes.is_empty() {
        spec.modes = modes.iter().copied().map(mode).collect();
    }
    let cfg = TrainConfig {
        epochs: epochs.unwrap_or(ctx.config.train.epochs),
        ..ctx.config.train.clone()
    };
    let bundle = train_bundle(&train, &kb, &schema, &cfg, &spec)?;
    let out = out.unwrap_or_else(|| ctx.path(&ctx.config.paths.bundle));
    bundle.save(&out)?;
    let modes: Vec<&str> = spec.modes.iter().map(|m| m.as_str()).collect();
    println!(
        "trained on {} dialogues ({} held out), modes [{}], wrote {}",
        train.len(),
        test.len(),
        modes.join(", "),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(
    ctx: &Ctx,
    transcript: &Path,
    bundle: Option<&Path>,
    no_dst: bool,
    show_snapshot: bool,
) -> Result<ExitCode> {
    let schema = ctx.schema()?;
    let bundle = ctx.bundle(bundle)?;
    bundle.check_schema(&schema)?;
    let sq = ctx.questions(&schema)?;
    let dialogue = load_transcript(transcript)
        .with_context(|| format!("loading transcript {}", transcript.display()))?;
    let mut cfg = ctx.config.tracker.clone();
    cfg.dst_enabled &= !no_dst;
    let mut state = SessionState::new();
    for u in &dialogue.utterances {
        for event in process_utterance(&mut state, u, &bundle, &sq, &cfg)? {
            println!("{}", serde_json::to_string(&LogRecord::Event { event })?);
        }
    }
    if show_snapshot {
        println!("{}", serde_json::to_string(&snapshot(&state))?);
    }
    Ok(ExitCode::SUCCESS)
}

fn eval(
    ctx: &Ctx,
    bundle: Option<&Path>,
    no_dst: bool,
    no_baseline: bool,
    format: Format,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let schema = ctx.schema()?;
    let bundle = ctx.bundle(bundle)?;
    let sq = ctx.questions(&schema)?;
    let cases = ctx.corpus()?;
    let (_, test) = split_corpus(&cases, ctx.config.models.test_fraction);
    let cfg = ExperimentConfig {
        dst_enabled: !no_dst,
        baseline_enabled: !no_baseline,
        modes: bundle.qid.keys().copied().collect(),
        tracker: ctx.config.tracker.clone(),
    };
    let report = run_experiment(&test, &bundle, &schema, &sq, &cfg)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("report.jsonl"), report.to_json_lines(true))?;
        std::fs::write(dir.join("report.txt"), report.to_text(true))?;
    }
    match format {
        Format::Text => print!("{}", report.to_text(true)),
        Format::Json => print!("{}", report.to_json_lines(true)),
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(
    ctx: &Ctx,
    port: Option<u16>,
    bundle: Option<PathBuf>,
    schema: Option<PathBuf>,
    sessions: Option<PathBuf>,
) -> Result<ExitCode> {
    let schema = ctx.schema_at(schema.as_deref())?;
    let bundle = ctx.bundle(bundle.as_deref())?;
    let sq = ctx.questions(&schema)?;
    let manager = SessionManager::new(
        Arc::new(bundle),
        Arc::new(schema),
        Arc::new(sq),
        ServiceOptions {
            sessions_dir: sessions.unwrap_or_else(|| ctx.path(&ctx.config.paths.sessions)),
            tracker: ctx.config.tracker.clone(),
            fsync: true,
        },
    )?;
    let addr = format!(
        "{}:{}",
        ctx.config.service.host,
        port.unwrap_or(ctx.config.service.port)
    );
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(crate::server::serve(Arc::new(manager), &addr))?;
    Ok(ExitCode::SUCCESS)
}

fn report(name: &str, passed: bool, detail: &str) -> bool {
    println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    passed
}

/// Runs a small generated corpus twice and through a log fold; all three
/// must agree.
fn replay_check() -> Result<(bool, String)> {
    let schema = ReportSchema::default_schema();
    let kb = generate_kb(&KbGenConfig::default())?;
    let sq = StandardQuestionSet::default_for(&schema)?;
    let cases = generate_corpus(
        &schema,
        &kb,
        &GeneratorConfig::new(6, 0.5, NoiseConfig::clean(), 7),
    )?;
    let cfg = TrainConfig {
        epochs: 3,
        dim: 8,
        embed_dim: 8,
        ..TrainConfig::default()
    };
    let spec = BundleSpec {
        trainable_tagger: false,
        ..BundleSpec::default()
    };
    let bundle = train_bundle(&cases, &kb, &schema, &cfg, &spec)?;
    let tracker = claimlens_core::tracker::TrackerConfig::default();
    let mut turns = 0;
    for case in &cases {
        let mut runs = Vec::new();
        for _ in 0..2 {
            let mut state = SessionState::new();
            let mut log = Vec::new();
            for u in &case.dialogue.utterances {
                log.push(LogRecord::Utterance {
                    utterance: u.clone(),
                });
                for event in process_utterance(&mut state, u, &bundle, &sq, &tracker)? {
                    log.push(LogRecord::Event { event });
                }
            }
            runs.push((state, log));
        }
        turns += case.dialogue.utterances.len();
        if runs[0] != runs[1] {
            return Ok((false, format!("{} replays differ", case.dialogue.id)));
        }
        if SessionState::replay(&runs[0].1)? != runs[0].0 {
            return Ok((false, format!("{} log fold differs", case.dialogue.id)));
        }
        let snap = snapshot(&runs[0].0);
        for views in snap.confirmed.values() {
            for v in views {
                if runs[0].0.record(v.id)?.state != claimlens_core::tracker::KeywordState::Confirmed
                {
                    return Ok((false, format!("record {} shown unconfirmed", v.id)));
                }
            }
        }
    }
    Ok((true, format!("{} dialogues, {turns} turns", cases.len())))
}

fn check(seeds: u64) -> Result<ExitCode> {
    let mut ok = true;
    for c in gradient_suite(seeds)? {
        ok &= report(
            &format!("gradient {}", c.name),
            c.passed(),
            &format!(
                "worst {:.3e} over {seeds} seeds (tolerance {:.0e})",
                c.worst, c.tolerance
            ),
        );
    }
    let kb = generate_kb(&KbGenConfig::default())?;
    let failures = single_edit_failures(&kb, claimlens_core::linking::DEFAULT_TAU);
    ok &= report(
        "linking single edits",
        failures.is_empty(),
        &format!("{} failures over {} entries", failures.len(), kb.len()),
    );
    let (passed, detail) = replay_check()?;
    ok &= report("tracker replay", passed, &detail);
    Ok(if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
