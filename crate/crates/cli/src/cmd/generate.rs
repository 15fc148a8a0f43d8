use std::path::{Path, PathBuf};

use clap::Args;
use csigan::data::save_csi;
use csigan::models::{load_checkpoint, ModelSpec};
use csigan::training::generate_synthetic;

use crate::config::Settings;
use crate::{CliError, Common};

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Generator checkpoint; the `.ckpt` extension may be left off.
    #[arg(long, value_name = "FILE")]
    ckpt: Option<PathBuf>,
    /// Samples drawn for every class.
    #[arg(long)]
    per_class: Option<usize>,
}

/// `run1/ckpt_2000` finds `run1/ckpt_2000.ckpt`.
fn resolve(path: &str) -> PathBuf {
    let p = Path::new(path);
    if !p.exists() {
        let with_ext = p.with_extension("ckpt");
        if with_ext.exists() {
            return with_ext;
        }
    }
    p.to_path_buf()
}

pub fn run(a: GenerateArgs, mut s: Settings) -> Result<(), CliError> {
    s.flag("generate.ckpt", a.ckpt.as_ref().map(|p| p.display()));
    s.flag("generate.per_class", a.per_class);
    s.flag("generate.seed", a.common.seed);
    let ckpt_path: String = s.require("generate.ckpt", "--ckpt")?;
    let per_class: usize = s.get("generate.per_class", 3750)?;
    let seed: u64 = s.get("generate.seed", 0)?;
    let raw_scale = s.get("generate.denormalize", true)?;
    s.finish()?;
    if per_class == 0 {
        return Err(CliError::Usage("--per-class must be >= 1".into()));
    }

    let ckpt = load_checkpoint(resolve(&ckpt_path))?;
    let ModelSpec::Generator(spec) = &ckpt.spec else {
        return Err(CliError::Core(csigan::error::Error::Format(format!(
            "{ckpt_path} holds a {} checkpoint, not a generator",
            ckpt.spec.kind()
        ))));
    };
    let batch = if raw_scale {
        generate_synthetic(spec, &ckpt.params, per_class, seed, ckpt.data_range)?
    } else {
        // stays on the training scale, and says so in the file header
        generate_synthetic(spec, &ckpt.params, per_class, seed, None)?.with_norm(ckpt.data_range)
    };
    save_csi(&batch, &a.common.out)?;
    println!(
        "{} samples ({} per class, K = {}) -> {}",
        batch.len(),
        per_class,
        spec.num_classes,
        a.common.out.display()
    );
    Ok(())
}
