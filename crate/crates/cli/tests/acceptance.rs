//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use iconify::config::RunConfig;
use iconify::dataset::{
    augment_icons, extract_all, load_coco, read_rgb, synthetic_shapes, AugmentParams, DomainDataset, DEFAULT_MIN_AREA,
    SYNTHETIC_SEED,
};
use iconify::loss::{LossWeights, Preset};
use iconify::nn::{DiscriminatorConfig, Domain, GeneratorConfig};
use iconify::training::{
    cyclegan_train_step, run_coarse_to_fine, CycleGanConfig, CycleGanModel, LogLine, LossLog, LossReport, Model,
    Session, StageSchedule, TrainObserver,
};
use iconify::verify::{run_verify, VerifyOptions, VerifyReport, ORACLE_COMBOS, ORACLE_TOLERANCE};
use image::{Rgb, RgbImage};

const GRAD_LIMIT: f64 = 1e-4;
const SUITE_BUDGET: Duration = Duration::from_secs(60);
const ORACLE_MIN_COMBOS: usize = 20;
const SMOKE_CYCLE_RATIO: f64 = 0.5;
const SMOKE_CONVERT_DIFF: f64 = 0.05;
const SMOKE_BUDGET: Duration = Duration::from_secs(600);
const UNIT_REC_DECREASE: f64 = 0.30;
const RESUME_TOLERANCE: f64 = 1e-6;
const IDENTITY_RATIO: f64 = 0.1;
const OVERFIT_STEPS: u64 = 1000;
const OVERFIT_RATIO: f64 = 0.5;
const WINDOW: usize = 20;

struct Ctx {
    root: PathBuf,
    tmp: tempfile::TempDir,
    verify: Option<VerifyReport>,
    smoke_run: Option<PathBuf>,
    smoke_conv: Option<PathBuf>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.tmp.path().join(name)
    }

    fn verify(&mut self) -> &VerifyReport {
        self.verify.get_or_insert_with(|| {
            run_verify(&VerifyOptions {
                fast: false,
                fault: None,
                seed: 0,
            })
            .expect("verify suite runs")
        })
    }
}

fn iconify(args: &[&str]) {
    let o = Command::new(env!("CARGO_BIN_EXE_iconify"))
        .args(["--threads", "1", "-q"])
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        o.status.success(),
        "iconify {args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn window_mean(log: &[LogLine], range: std::ops::Range<usize>, terms: &[&str]) -> f64 {
    let n = range.len() as f64;
    log[range]
        .iter()
        .map(|l| terms.iter().map(|t| l.terms[*t]).sum::<f64>())
        .sum::<f64>()
        / n
}

fn mean_abs_diff(a: &RgbImage, b: &RgbImage) -> f64 {
    assert_eq!(a.dimensions(), b.dimensions());
    let total: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(x, y)| (*x as f64 - *y as f64).abs())
        .sum();
    total / a.as_raw().len() as f64 / 255.0
}

fn write_images(dir: &Path, images: &[RgbImage]) {
    fs::create_dir_all(dir).unwrap();
    for (i, im) in images.iter().enumerate() {
        im.save(dir.join(format!("x{i:02}.png"))).unwrap();
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn gradient_integrity(c: &mut Ctx) -> (bool, String) {
    let r = c.verify();
    let grads: Vec<_> = r.rows.iter().filter(|r| r.name.starts_with("grad ")).collect();
    let worst = grads.iter().map(|r| r.value).fold(0.0, f64::max);
    let ok = grads.iter().all(|r| r.passed() && r.value < GRAD_LIMIT) && r.elapsed < SUITE_BUDGET;
    let failed: Vec<_> = grads.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    (
        ok,
        format!(
            "{} gradient checks, worst rel err {worst:.2e} (limit {GRAD_LIMIT:.0e}, smooth ops 1e-6), whole suite {:.1}s (budget {}s){}",
            grads.len(),
            r.elapsed.as_secs_f64(),
            SUITE_BUDGET.as_secs(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn oracle_equivalence(c: &mut Ctx) -> (bool, String) {
    let r = c.verify();
    let rows: Vec<_> = r
        .rows
        .iter()
        .filter(|r| r.name.starts_with("oracle ") || r.name.starts_with("adjoint"))
        .collect();
    let worst = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    let ok = rows.len() == 3 && rows.iter().all(|r| r.passed()) && ORACLE_COMBOS >= ORACLE_MIN_COMBOS;
    (
        ok,
        format!(
            "conv2d, conv_transpose2d and adjointness on {ORACLE_COMBOS} random geometries: max abs err {worst:.2e} (limit {ORACLE_TOLERANCE:.0e})"
        ),
    )
}

fn dataset_counts(c: &mut Ctx) -> (bool, String) {
    let icon = |i: usize| {
        RgbImage::from_fn(16, 16, |x, y| {
            if (x as usize + y as usize + i).is_multiple_of(7) {
                Rgb([0, 0, 0])
            } else {
                Rgb([255; 3])
            }
        })
    };
    let icons: Vec<_> = (0..883).map(icon).collect();
    let a = augment_icons(&icons, &AugmentParams::with_k(10), 0).unwrap().len();
    let b = augment_icons(&icons[..72], &AugmentParams::with_k(20), 0)
        .unwrap()
        .len();

    let fixture = c.root.join("crates/core/fixtures/coco_mini");
    let expected: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture.join("expected.json")).unwrap()).unwrap();
    let out = c.path("prepared");
    iconify(&[
        "prepare",
        "--coco",
        s(&fixture.join("annotations.json")),
        "--images",
        s(&fixture.join("images")),
        "--output-dir",
        s(&out),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let got = summary["photos"]["cutouts"].as_u64().unwrap();
    let want = expected["cutouts"].as_u64().unwrap();

    let corpus = load_coco(&fixture.join("annotations.json"), &fixture.join("images")).unwrap();
    let (kept, skipped) = extract_all(&corpus, DEFAULT_MIN_AREA);
    let (all, _) = extract_all(&corpus, 1);
    let filter_ok = kept.iter().all(|k| k.area >= DEFAULT_MIN_AREA)
        && all.len() == kept.len() + skipped.below_min_area
        && skipped.below_min_area as u64 == expected["skipped_below_min_area"].as_u64().unwrap()
        && skipped.below_min_area > 0;
    (
        a == 8830 && b == 1440 && got == want && filter_ok,
        format!(
            "883 -> {a} (want 8830), 72 -> {b} (want 1440), fixture cutouts {got} (want {want}), min-area filter dropped {} of {}",
            skipped.below_min_area,
            all.len()
        ),
    )
}

fn smoke_cyclegan(c: &mut Ctx) -> (bool, String) {
    let run = c.path("smoke-a");
    let start = Instant::now();
    iconify(&[
        "train",
        "--config",
        s(&c.root.join("configs/smoke.cfg")),
        "--output-dir",
        s(&run),
    ]);
    let elapsed = start.elapsed();
    let log = LossLog::read(&run.join("loss.log")).unwrap();
    let n = log.len();
    let first = window_mean(&log, 0..WINDOW, &["cyc_x", "cyc_y"]);
    let last = window_mean(&log, n - WINDOW..n, &["cyc_x", "cyc_y"]);
    let ratio = last / first;

    let (squares, _) = synthetic_shapes(8, 32, SYNTHETIC_SEED);
    let inputs = c.path("smoke-inputs");
    write_images(&inputs, &squares);
    let conv = c.path("smoke-conv-a");
    iconify(&[
        "iconify",
        "--checkpoint",
        s(&run.join("stage-32.ckpt")),
        "--reconstruct",
        "--output-dir",
        s(&conv),
        s(&inputs),
    ]);
    let diff = (0..squares.len())
        .map(|i| {
            mean_abs_diff(
                &squares[i],
                &read_rgb(&conv.join(format!("x{i:02}.iconified.png"))).unwrap(),
            )
        })
        .sum::<f64>()
        / squares.len() as f64;
    c.smoke_run = Some(run);
    c.smoke_conv = Some(conv);
    (
        n == 200 && ratio <= SMOKE_CYCLE_RATIO && diff > SMOKE_CONVERT_DIFF && elapsed < SMOKE_BUDGET,
        format!(
            "cycle loss last/first {WINDOW} steps = {last:.3}/{first:.3} = {ratio:.3} (limit {SMOKE_CYCLE_RATIO}), convert mean abs diff {diff:.3} (> {SMOKE_CONVERT_DIFF}), {n} steps in {:.1}s (budget {}s)",
            elapsed.as_secs_f64(),
            SMOKE_BUDGET.as_secs()
        ),
    )
}

fn shared_bits(model: &iconify::nn::UnitModel<f32>, domain: Domain) -> Vec<(String, Vec<u32>)> {
    model
        .encoder_view(domain)
        .into_iter()
        .chain(model.decoder_view(domain))
        .filter(|(k, _)| k.starts_with("shared."))
        .map(|(k, t)| (k, t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

fn smoke_unit(c: &mut Ctx) -> (bool, String) {
    let cfg = RunConfig::load(&c.root.join("configs/smoke-unit.cfg")).unwrap();
    let mut session = cfg.session().unwrap();
    let (squares, circles) = synthetic_shapes(cfg.data.synthetic_count, cfg.data.synthetic_size, SYNTHETIC_SEED);
    let x = DomainDataset::from_images(Domain::X, &squares, cfg.run.seed).unwrap();
    let y = DomainDataset::from_images(Domain::Y, &circles, cfg.run.seed).unwrap();
    let weights = cfg.weights();
    let mut rec = Vec::new();
    let mut shared_checks = 0;
    let mut shared_ok = true;
    let mut shared_count = 0;
    while !session.is_finished() {
        let r = session.step(&x, &y, &weights).unwrap();
        rec.push(r.get("rec_x").unwrap() + r.get("rec_y").unwrap());
        if session.position.stage_iter >= session.schedule.stages()[session.position.stage_index].1 {
            session.position.stage_index += 1;
            session.position.stage_iter = 0;
        }
        let Model::Unit(t) = &session.model else {
            panic!("unit config built another model")
        };
        let (a, b) = (shared_bits(&t.model, Domain::X), shared_bits(&t.model, Domain::Y));
        shared_count = a.len();
        shared_ok &= !a.is_empty() && a == b;
        shared_checks += 1;
    }
    let n = rec.len();
    let first = rec[..WINDOW].iter().sum::<f64>() / WINDOW as f64;
    let last = rec[n - WINDOW..].iter().sum::<f64>() / WINDOW as f64;
    let decrease = 1.0 - last / first;
    (
        n == 200 && decrease >= UNIT_REC_DECREASE && shared_ok,
        format!(
            "reconstruction term {first:.3} -> {last:.3}, decrease {:.1}% (need {:.0}%), {shared_count} shared tensors bitwise identical across X/Y paths after {shared_checks} of {n} steps",
            decrease * 100.0,
            UNIT_REC_DECREASE * 100.0
        ),
    )
}

fn tiny_cyclegan() -> CycleGanConfig {
    CycleGanConfig {
        generator: GeneratorConfig {
            base_width: 4,
            n_res_blocks: 1,
        },
        discriminator: DiscriminatorConfig {
            base_width: 4,
            n_strided: 3,
        },
        ..CycleGanConfig::default()
    }
}

#[derive(Default)]
struct Boundaries {
    ends: Vec<Vec<(String, Vec<u32>)>>,
    starts: Vec<Vec<(String, Vec<u32>)>>,
}

fn param_bits(s: &Session) -> Vec<(String, Vec<u32>)> {
    s.model
        .parameters()
        .into_iter()
        .map(|(k, t)| (k, t.data().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

impl TrainObserver for Boundaries {
    fn on_stage_start(&mut self, _: usize, _: usize, s: &Session) -> iconify::Result<()> {
        self.starts.push(param_bits(s));
        Ok(())
    }
    fn on_step(&mut self, _: u64, _: usize, _: &LossReport) -> iconify::Result<()> {
        Ok(())
    }
    fn on_stage_end(&mut self, _: usize, _: usize, s: &Session) -> iconify::Result<()> {
        self.ends.push(param_bits(s));
        Ok(())
    }
}

const TWO_STAGE: &str = r#"
[run]
model = "cyclegan"
preset = "bw-icons"
seed = 7

[schedule]
resolutions = [32, 64]
iterations = [4, 4]

[network]
ngf = 4
n_res_blocks = 1
ndf = 4

[data]
synthetic = true
synthetic_count = 6
synthetic_size = 64
"#;

fn coarse_to_fine(c: &mut Ctx) -> (bool, String) {
    let (sq, ci) = synthetic_shapes(6, 128, 1);
    let x = DomainDataset::from_images(Domain::X, &sq, 0).unwrap();
    let y = DomainDataset::from_images(Domain::Y, &ci, 0).unwrap();
    let schedule = StageSchedule::new(vec![(32, 3), (64, 3), (128, 2)]).unwrap();
    let mut session = Session::cyclegan(tiny_cyclegan(), schedule, 1, 0).unwrap();
    let mut b = Boundaries::default();
    run_coarse_to_fine(&mut session, &x, &y, &LossWeights::default(), &mut b).unwrap();
    let boundaries = b.ends.len() - 1;
    let carried = (0..boundaries).filter(|&i| b.ends[i] == b.starts[i + 1]).count();

    let cfg = c.path("two-stage.cfg");
    fs::write(&cfg, TWO_STAGE).unwrap();
    let full = c.path("c2f-full");
    let part = c.path("c2f-part");
    iconify(&["train", "--config", s(&cfg), "--output-dir", s(&full)]);
    iconify(&[
        "train",
        "--config",
        s(&cfg),
        "--output-dir",
        s(&part),
        "--max-steps",
        "5",
    ]);
    iconify(&[
        "train",
        "--config",
        s(&cfg),
        "--output-dir",
        s(&part),
        "--resume",
        s(&part.join("step-000005.ckpt")),
    ]);
    let a = LossLog::read(&full.join("loss.log")).unwrap();
    let r = LossLog::read(&part.join("loss.log")).unwrap();
    let mut worst = 0.0f64;
    let mut same_shape = a.len() == r.len() && a.len() == 8;
    for (la, lr) in a.iter().zip(&r) {
        same_shape &= la.step == lr.step && la.resolution == lr.resolution && la.terms.len() == lr.terms.len();
        for (k, v) in &la.terms {
            worst = worst.max((v - lr.terms.get(k).copied().unwrap_or(f64::INFINITY)).abs());
        }
    }
    (
        carried == boundaries && boundaries == 2 && same_shape && worst <= RESUME_TOLERANCE,
        format!(
            "parameters bitwise equal across {carried}/{boundaries} stage boundaries; resume at step 5 of 8 reproduces the log, max term diff {worst:.1e} (limit {RESUME_TOLERANCE:.0e})"
        ),
    )
}

fn identity_presets(_: &mut Ctx) -> (bool, String) {
    let (sq, ci) = synthetic_shapes(1, 32, 0);
    let x = iconify::dataset::to_tensor::<f32>(&sq[0])
        .reshape([1, 3, 32, 32])
        .unwrap();
    let y = iconify::dataset::to_tensor::<f32>(&ci[0])
        .reshape([1, 3, 32, 32])
        .unwrap();
    let step = |w: LossWeights| {
        let mut m = CycleGanModel::<f32>::build(tiny_cyclegan(), 0).unwrap();
        cyclegan_train_step(&mut m, &x, &y, &w).unwrap()
    };
    let color = step(LossWeights::preset(Preset::ColorLogos));
    let bw = step(LossWeights::preset(Preset::BwIcons));
    let off = step(LossWeights {
        lambda_idt: 0.0,
        ..LossWeights::preset(Preset::BwIcons)
    });
    let ratio = |k: &str| bw.get(k).unwrap() / color.get(k).unwrap();
    let (rx, ry) = (ratio("idt_x"), ratio("idt_y"));
    let ratio_ok = [rx, ry]
        .iter()
        .all(|r| (r - IDENTITY_RATIO).abs() <= 1e-5 * IDENTITY_RATIO);
    let off_ok = off.get("idt_x") == Some(0.0) && off.get("idt_y") == Some(0.0) && off.identity_nodes == 0;
    (
        ratio_ok && off_ok && bw.identity_nodes > 0,
        format!(
            "bw/color identity term ratio {rx:.6}, {ry:.6} (want {IDENTITY_RATIO}); lambda_idt = 0 reports {:?}/{:?} with {} identity tape nodes",
            off.get("idt_x").unwrap(),
            off.get("idt_y").unwrap(),
            off.identity_nodes
        ),
    )
}

fn l1_to_cycled(inputs: &[RgbImage], conv: &Path) -> f64 {
    let per_image: Vec<f64> = (0..inputs.len())
        .map(|i| {
            let cycled = read_rgb(&conv.join(format!("x{i:02}.cycled.png"))).unwrap();
            // Pixel diff back on the [-1, 1] model scale.
            2.0 * mean_abs_diff(&inputs[i], &cycled)
        })
        .collect();
    per_image.iter().sum::<f64>() / per_image.len() as f64
}

fn overfit(c: &mut Ctx) -> (bool, String) {
    let mut cfg = RunConfig::load(&c.root.join("configs/smoke.cfg")).unwrap();
    cfg.data.synthetic_count = 4;
    cfg.schedule.iterations = Some(vec![OVERFIT_STEPS]);
    let cfg_path = c.path("overfit.cfg");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    let run = c.path("overfit");
    iconify(&[
        "train",
        "--config",
        s(&cfg_path),
        "--output-dir",
        s(&run),
        "--max-steps",
        "1",
    ]);
    iconify(&[
        "train",
        "--config",
        s(&cfg_path),
        "--output-dir",
        s(&run),
        "--resume",
        s(&run.join("step-000001.ckpt")),
    ]);

    let (pairs_x, _) = synthetic_shapes(4, 32, SYNTHETIC_SEED);
    let inputs = c.path("overfit-inputs");
    write_images(&inputs, &pairs_x);
    let early = c.path("overfit-step1");
    let late = c.path("overfit-final");
    iconify(&[
        "iconify",
        "--checkpoint",
        s(&run.join("step-000001.ckpt")),
        "--reconstruct",
        "--output-dir",
        s(&early),
        s(&inputs),
    ]);
    iconify(&[
        "iconify",
        "--checkpoint",
        s(&run.join("stage-32.ckpt")),
        "--reconstruct",
        "--output-dir",
        s(&late),
        s(&inputs),
    ]);
    let (a, b) = (l1_to_cycled(&pairs_x, &early), l1_to_cycled(&pairs_x, &late));
    let ratio = b / a;
    (
        ratio <= OVERFIT_RATIO,
        format!("L1(x, F(G(x))) on 4 training pairs: step 1 {a:.4}, step {OVERFIT_STEPS} {b:.4}, ratio {ratio:.3} (limit {OVERFIT_RATIO})"),
    )
}

fn determinism(c: &mut Ctx) -> (bool, String) {
    let (Some(run_a), Some(conv_a)) = (c.smoke_run.clone(), c.smoke_conv.clone()) else {
        return (false, "smoke run unavailable".into());
    };
    let run_b = c.path("smoke-b");
    iconify(&[
        "train",
        "--config",
        s(&c.root.join("configs/smoke.cfg")),
        "--output-dir",
        s(&run_b),
    ]);
    let conv_b = c.path("smoke-conv-b");
    iconify(&[
        "iconify",
        "--checkpoint",
        s(&run_b.join("stage-32.ckpt")),
        "--reconstruct",
        "--output-dir",
        s(&conv_b),
        s(&c.path("smoke-inputs")),
    ]);
    let train_same = dir_bytes(&run_a) == dir_bytes(&run_b);
    let conv_same = dir_bytes(&conv_a) == dir_bytes(&conv_b);

    let fixture = c.root.join("crates/core/fixtures/coco_mini");
    let prep_b = c.path("prepared-b");
    iconify(&[
        "prepare",
        "--coco",
        s(&fixture.join("annotations.json")),
        "--images",
        s(&fixture.join("images")),
        "--output-dir",
        s(&prep_b),
    ]);
    let prep_same = dir_bytes(&c.path("prepared").join("photos")) == dir_bytes(&prep_b.join("photos"));

    let row = format!(
        "{0}/x00.png,{1}/x00.iconified.png,{1}/x00.cycled.png",
        s(&c.path("smoke-inputs")),
        s(&conv_a)
    );
    let (g1, g2) = (c.path("grid-a"), c.path("grid-b"));
    iconify(&["grid", "--row", &row, "--output-dir", s(&g1)]);
    iconify(&["grid", "--row", &row, "--output-dir", s(&g2)]);
    let grid_same = dir_bytes(&g1) == dir_bytes(&g2);
    let n_files = dir_bytes(&conv_a).len();
    (
        train_same && conv_same && prep_same && grid_same,
        format!(
            "repeat runs byte-identical: train log+checkpoint {train_same}, {n_files} converted PNGs {conv_same}, prepare {prep_same}, grid {grid_same}"
        ),
    )
}

type Check = fn(&mut Ctx) -> (bool, String);

fn main() -> ExitCode {
    let mut ctx = Ctx {
        root: Path::new(env!("CARGO_MANIFEST_DIR")).join("../.."),
        tmp: tempfile::tempdir().unwrap(),
        verify: None,
        smoke_run: None,
        smoke_conv: None,
    };
    let checks: [(&str, Check); 9] = [
        ("gradient integrity", gradient_integrity),
        ("oracle equivalence", oracle_equivalence),
        ("dataset counts", dataset_counts),
        ("smoke training (CycleGAN)", smoke_cyclegan),
        ("smoke training (UNIT)", smoke_unit),
        ("coarse-to-fine carry-over and resume", coarse_to_fine),
        ("identity-loss presets", identity_presets),
        ("overfit reconstruction", overfit),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(|| check(&mut ctx))) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += usize::from(!ok);
        println!(
            "{} {}. {name}: {detail} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{} passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
