//! `synth`: generate a benchmark from a spec file.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::Args;

use qafusion::eval::write_qrels_pairs;
use qafusion::synth::{generate, SynthSpec};
use qafusion::table::write_score_tables;

use crate::artifacts::write_meta;
use crate::{require_file, CliError};

#[derive(Args)]
pub struct SynthArgs {
    /// Benchmark spec (TOML); see the README for the format and defaults.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for the score files and qrels.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    require_file(&args.spec, "spec file")?;
    let text = std::fs::read_to_string(&args.spec).map_err(qafusion::Error::from)?;
    let spec: SynthSpec =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("spec file: {e}")))?;
    spec.validate().map_err(CliError::from)?;

    let (tables, qrels) = generate(&spec)?;
    std::fs::create_dir_all(&args.out_dir).map_err(qafusion::Error::from)?;

    for table in &tables {
        let path = args
            .out_dir
            .join(format!("scores_{}.jsonl", table.feature_id));
        let mut writer = BufWriter::new(File::create(&path).map_err(qafusion::Error::from)?);
        write_score_tables(&mut writer, std::slice::from_ref(table))?;
        write_meta(&path, "synth", &spec)?;
    }
    if !qrels.is_empty() {
        let path = args.out_dir.join("qrels.txt");
        let mut writer = BufWriter::new(File::create(&path).map_err(qafusion::Error::from)?);
        write_qrels_pairs(&mut writer, &qrels)?;
        write_meta(&path, "synth", &spec)?;
    }
    println!(
        "wrote {} feature table(s) ({} queries x {} gallery) to {}",
        tables.len(),
        tables[0].num_queries(),
        tables[0].num_gallery(),
        args.out_dir.display()
    );
    Ok(())
}
