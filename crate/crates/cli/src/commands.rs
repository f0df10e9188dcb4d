use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use histoxai_core::dataset::{self, Label, LabeledSet};
use histoxai_core::gradcam::{self, jet};
use histoxai_core::metrics::{self, TableRow};
use histoxai_core::models::{self, ArchitectureSpec, Family, TrainConfig};
use histoxai_core::network::{Checkpoint, Mode, Network};
use histoxai_core::stats::audit;
use histoxai_core::stats::survey::{self, SurveyMatrix, SurveySchema};
use histoxai_core::stats::TTestVariant;
use histoxai_core::Tensor4;

use crate::fail::{Failure, Kind};
use crate::manifest;
use crate::settings::Settings;

pub const CHECKPOINT_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "history.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const EXPLAIN_FILE: &str = "explain.txt";
pub const STATS_FILE: &str = "stats.txt";
pub const AUDIT_FILE: &str = "audit.txt";

const EXPLAIN_CHUNK: usize = 16;

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn text(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

pub fn dispatch(command: &str, s: &Settings, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", out.display())))?;
    let mut o = Outputs {
        dir: out,
        written: Vec::new(),
    };
    match command {
        "generate" => generate(s, &mut o)?,
        "train" => train(s, &mut o)?,
        "evaluate" => evaluate(s, &mut o)?,
        "explain" => explain(s, &mut o)?,
        "stats" => stats(s, &mut o)?,
        "audit" => run_audit(s, &mut o)?,
        other => return Err(Failure::new(Kind::Internal, format!("no handler for {other}"))),
    }
    manifest::write(out, command, s, &o.written)?;
    Ok(())
}

fn generate(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let n: usize = s.get("data.n")?;
    let seed: u64 = s.get("run.seed")?;
    let set = dataset::generate(n, seed, &dataset::GeneratorParams::default())?;
    o.written.extend(dataset::save_dir(&set, o.dir)?);
    println!(
        "generated {} images ({} healthy, {} diseased) in {}",
        set.len(),
        set.count(Label::Healthy),
        set.count(Label::Diseased),
        o.dir.display()
    );
    Ok(())
}

fn parse_widths(raw: &str, kind: Kind) -> Result<Vec<usize>, Failure> {
    raw.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .map_err(|e| Failure::new(kind, format!("widths {raw:?}: {e}")))
        })
        .collect()
}

fn split_for(set: &LabeledSet, fraction: f64, seed: u64) -> Result<(LabeledSet, LabeledSet), Failure> {
    Ok(dataset::split(set, fraction, seed)?)
}

/// Seeds batchnorm running statistics from one train-mode pass over the
/// first batch, leaving every weight at its initial value.
fn init_running_stats(net: &mut Network, train: &LabeledSet, batch: usize) -> Result<(), Failure> {
    let idx: Vec<usize> = (0..train.len().min(batch.max(1))).collect();
    let cache = net.forward(&train.batch(&idx)?, Mode::Train)?;
    net.commit_batch_stats(&cache);
    Ok(())
}

fn train(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let data_dir = s.input("data.dir")?;
    let seed: u64 = s.get("run.seed")?;
    let family: Family = s.get("model.family")?;
    let model_seed: u64 = s.opt("model.seed")?.unwrap_or(seed);
    let fraction: f64 = s.get("data.train_fraction")?;
    let cfg = TrainConfig {
        learning_rate: s.get("train.lr")?,
        epochs: s.get("train.epochs")?,
        batch_size: s.get("train.batch_size")?,
        seed,
    };
    let set = dataset::load_dir(&data_dir)?;
    let (train_set, test_set) = split_for(&set, fraction, seed)?;
    let shape = set
        .item_shape()
        .ok_or_else(|| Failure::new(Kind::Data, "empty data set"))?;
    let mut spec = ArchitectureSpec::new(family, model_seed).with_input(shape.c, shape.h, shape.w);
    if let Some(w) = s.raw("model.widths") {
        spec = spec.with_widths(parse_widths(w, s.bad_value_kind("model.widths"))?);
    }
    let mut net = models::build(&spec)?;
    let history = if cfg.epochs == 0 {
        if cfg.batch_size == 0 {
            return Err(Failure::new(Kind::Usage, "batch size must be positive"));
        }
        init_running_stats(&mut net, &train_set, cfg.batch_size)?;
        None
    } else {
        let (trained, history) = models::train(net, &train_set, Some(&test_set), &cfg)?;
        net = trained;
        Some(history)
    };

    let widths: Vec<String> = spec.widths.iter().map(|w| w.to_string()).collect();
    let meta: BTreeMap<String, String> = [
        ("family", family.to_string()),
        ("widths", widths.join(",")),
        ("model_seed", model_seed.to_string()),
        ("split_seed", seed.to_string()),
        ("train_fraction", fraction.to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let path = o.dir.join(CHECKPOINT_FILE);
    Checkpoint::new(net, meta).save(&path)?;
    o.written.push(path);
    match history {
        Some(h) => {
            o.text(HISTORY_FILE, &h.render())?;
            let last = h.epochs.last().expect("epochs > 0");
            println!(
                "trained {family} for {} epochs: train acc {:.4}, test acc {}",
                cfg.epochs,
                last.train_accuracy,
                last.validation_accuracy.map_or("n/a".into(), |v| format!("{v:.4}"))
            );
        }
        None => println!("saved untrained {family}"),
    }
    Ok(())
}

fn load_checkpoint(s: &Settings) -> Result<Checkpoint, Failure> {
    Ok(Checkpoint::load(&s.input("model.checkpoint")?)?)
}

fn meta<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T, Failure> {
    ck.metadata
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Failure::new(Kind::Data, format!("checkpoint metadata lacks a valid {key}")))
}

fn history_seconds(path: &Path) -> Result<f64, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
    text.lines()
        .find_map(|l| l.strip_prefix("total_seconds ").and_then(|v| v.trim().parse().ok()))
        .ok_or_else(|| Failure::new(Kind::Data, format!("{}: no total_seconds line", path.display())))
}

fn evaluate(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let ck = load_checkpoint(s)?;
    let set = dataset::load_dir(&s.input("data.dir")?)?;
    let which: String = s.get("evaluate.split")?;
    let eval_set = match which.as_str() {
        "all" => set,
        "test" => split_for(&set, meta(&ck, "train_fraction")?, meta(&ck, "split_seed")?)?.1,
        other => return Err(Failure::new(Kind::Usage, format!("split must be test or all, got {other:?}"))),
    };
    let training_seconds = match s.raw("evaluate.history") {
        Some(_) => Some(history_seconds(&s.input("evaluate.history")?)?),
        None => None,
    };
    let preds = models::predict(&ck.network, &eval_set)?;
    let cm = metrics::confusion(&preds, &eval_set.labels(), Label::Diseased.index())?;
    let report = metrics::score(&cm)?;
    let model = ck.metadata.get("family").cloned().unwrap_or_else(|| "model".into());
    let mut text = metrics::render_table(&[TableRow {
        model,
        report,
        training_seconds,
    }]);
    text.push_str(&format!("\nconfusion {cm}\nsplit {which} n={}\n", eval_set.len()));
    o.text(METRICS_FILE, &text)?;
    print!("{text}");
    Ok(())
}

fn class_name(c: usize) -> String {
    Label::from_index(c).map_or_else(|| format!("class{c}"), |l| l.as_str().to_string())
}

enum Target {
    Predicted,
    Class(usize),
}

fn parse_target(raw: &str, classes: usize) -> Result<Target, Failure> {
    let t = match raw {
        "predicted" => Target::Predicted,
        "healthy" => Target::Class(Label::Healthy.index()),
        "diseased" => Target::Class(Label::Diseased.index()),
        n => Target::Class(n.parse().map_err(|_| {
            Failure::new(Kind::Usage, format!("target must be predicted, healthy, diseased or a class index, got {n:?}"))
        })?),
    };
    if let Target::Class(c) = t {
        if c >= classes {
            return Err(Failure::new(Kind::Usage, format!("target class {c} out of range for {classes} classes")));
        }
    }
    Ok(t)
}

/// Images to explain: a generated set keeps its masks, a flat directory
/// of PNGs has none.
fn explain_inputs(dir: &Path) -> Result<LabeledSet, Failure> {
    if dir.join(Label::Healthy.as_str()).is_dir() && dir.join(Label::Diseased.as_str()).is_dir() {
        return Ok(dataset::load_dir(dir)?);
    }
    let files = dataset::list_pngs(dir)?;
    if files.is_empty() {
        return Err(Failure::new(Kind::Data, format!("no PNG files in {}", dir.display())));
    }
    let mut set = LabeledSet::default();
    for path in files {
        set.items.push(dataset::Item {
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            image: dataset::read_png(&path)?,
            // Unknown for loose files; only used for the summary column.
            label: Label::Healthy,
            mask: None,
        });
    }
    Ok(set)
}

fn explain(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let ck = load_checkpoint(s)?;
    let net = &ck.network;
    let input = s.input("explain.input")?;
    let set = explain_inputs(&input)?;
    let target = parse_target(&s.get::<String>("explain.target")?, net.classes())?;
    let alpha: f64 = s.get("explain.alpha")?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Failure::new(Kind::Usage, format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let layer: Option<usize> = s.opt("explain.layer")?;

    let mut summary = String::from("image  target  predicted  localization  degenerate\n");
    let (mut scored, mut score_sum, mut degenerate) = (0usize, 0.0, 0usize);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EXPLAIN_CHUNK) {
        let batch: Tensor4 = set.batch(chunk)?;
        let (preds, cache) = models::classify_batch(net, &batch)?;
        let targets: Vec<usize> = preds
            .iter()
            .map(|p| match target {
                Target::Predicted => p.class,
                Target::Class(c) => c,
            })
            .collect();
        let cams = gradcam::gradcam_batch(net, &cache, &targets, layer)?;
        for ((&i, cam), pred) in chunk.iter().zip(&cams).zip(&preds) {
            let item = &set.items[i];
            let class = class_name(cam.heatmap.target_class);
            let img = gradcam::overlay(&cam.heatmap, &item.image, alpha, jet)?;
            let png = o.dir.join(format!("{}.gradcam.{class}.png", item.name));
            dataset::write_rgb_png(&img, &png)?;
            o.written.push(png);
            let loc = match &item.mask {
                Some(m) => Some(gradcam::localization_score(&cam.heatmap, m)?),
                None => None,
            };
            let side = gradcam::sidecar(cam, Some((pred.class, &pred.probabilities)), loc);
            o.text(&format!("{}.gradcam.{class}.txt", item.name), &side)?;
            if let Some(l) = loc {
                scored += 1;
                score_sum += l.score;
            }
            degenerate += usize::from(cam.heatmap.degenerate);
            summary.push_str(&format!(
                "{}  {class}  {}  {}  {}\n",
                item.name,
                class_name(pred.class),
                loc.map_or("n/a".into(), |l| format!("{:.6}", l.score)),
                cam.heatmap.degenerate
            ));
        }
    }
    let mean = (scored > 0).then(|| score_sum / scored as f64);
    summary.push_str(&format!(
        "\nimages {}\noverlays {}\ndegenerate {degenerate}\nmean_localization {}\n",
        set.len(),
        set.len(),
        mean.map_or("n/a".into(), |m| format!("{m:.6} over {scored} masked images"))
    ));
    o.text(EXPLAIN_FILE, &summary)?;
    println!(
        "wrote {} overlays to {}; degenerate {degenerate}; mean localization {}",
        set.len(),
        o.dir.display(),
        mean.map_or("n/a".into(), |m| format!("{m:.4}"))
    );
    Ok(())
}

fn stats(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let path = s.input("stats.survey")?;
    let schema = SurveySchema {
        scale_min: s.get("stats.scale_min")?,
        scale_max: s.get("stats.scale_max")?,
        reverse: s
            .raw("stats.reverse")
            .map(|r| r.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
            .unwrap_or_default(),
    };
    let variant: TTestVariant = s.get("stats.ttest")?;
    let m = SurveyMatrix::load(&path, &schema)?;
    let text = survey::battery(&m, s.get("stats.experience_cut")?, variant)?.render();
    o.text(STATS_FILE, &text)?;
    print!("{text}");
    Ok(())
}

fn run_audit(s: &Settings, o: &mut Outputs) -> Result<(), Failure> {
    let path = s.input("audit.records")?;
    let text = fs::read_to_string(&path).map_err(|e| Failure::new(Kind::Io, format!("{}: {e}", path.display())))?;
    let records = audit::parse_records(&text)?;
    let report = audit::render_findings(&audit::audit_records(&records));
    o.text(AUDIT_FILE, &report)?;
    print!("{report}");
    Ok(())
}
