use clap::Args;
use csigan::data::{save_csi, synth_corpus, SynthCorpusSpec};

use crate::config::Settings;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    time: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    /// Scale of the differences between class templates.
    #[arg(long)]
    separation: Option<f32>,
    /// Standard deviation of the per-sample noise.
    #[arg(long)]
    noise: Option<f32>,
}

pub fn run(a: SynthArgs, mut s: Settings) -> Result<(), CliError> {
    let d = SynthCorpusSpec::desk();
    s.flag("corpus.classes", a.classes);
    s.flag("corpus.antennas", a.antennas);
    s.flag("corpus.time", a.time);
    s.flag("corpus.per_class", a.per_class);
    s.flag("corpus.separation", a.separation);
    s.flag("corpus.noise", a.noise);
    s.flag("corpus.seed", a.common.seed);
    let spec = SynthCorpusSpec {
        num_classes: s.get("corpus.classes", d.num_classes)?,
        antennas: s.get("corpus.antennas", d.antennas)?,
        time: s.get("corpus.time", d.time)?,
        per_class: s.get("corpus.per_class", d.per_class)?,
        class_separation: s.get("corpus.separation", d.class_separation)?,
        noise_sigma: s.get("corpus.noise", d.noise_sigma)?,
        seed: s.get("corpus.seed", d.seed)?,
    };
    s.finish()?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let batch = synth_corpus(&spec)?;
    save_csi(&batch, &a.common.out)?;
    for (class, n) in batch.class_counts().iter().enumerate() {
        println!("class {class}: {n}");
    }
    println!("total: {} samples of {}x{} -> {}", batch.len(), spec.antennas, spec.time, a.common.out.display());
    Ok(())
}
