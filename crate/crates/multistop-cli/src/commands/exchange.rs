use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use multistop::exchange::{
    self, exercise_boundary, mc_policy_value, optimal_pair_policy, price_exchange_double,
    MarketParams, McPolicy,
};

use crate::fmt::{bool_repr, f64_repr};
use crate::inputs::load_config;
use crate::{engine_err, write_out, CliError};

#[derive(Args, Debug)]
pub struct ExchangeArgs {
    /// JSON config supplying defaults for any flag below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial price of the first asset.
    #[arg(long)]
    x1: Option<f64>,
    /// Initial price of the second asset.
    #[arg(long)]
    x2: Option<f64>,
    /// Volatility of the first asset (per sqrt-year).
    #[arg(long)]
    sigma1: Option<f64>,
    /// Volatility of the second asset (per sqrt-year).
    #[arg(long)]
    sigma2: Option<f64>,
    /// Maturity in years.
    #[arg(long)]
    maturity: Option<f64>,
    /// Lattice steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Monte Carlo seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExchangeConfig {
    x1: Option<f64>,
    x2: Option<f64>,
    sigma1: Option<f64>,
    sigma2: Option<f64>,
    maturity: Option<f64>,
    steps: Option<usize>,
    paths: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

pub fn run(mut args: ExchangeArgs) -> Result<(), CliError> {
    let cfg: ExchangeConfig = match &args.config {
        Some(path) => load_config(path)?,
        None => ExchangeConfig::default(),
    };
    args.x1 = args.x1.or(cfg.x1);
    args.x2 = args.x2.or(cfg.x2);
    args.sigma1 = args.sigma1.or(cfg.sigma1);
    args.sigma2 = args.sigma2.or(cfg.sigma2);
    args.maturity = args.maturity.or(cfg.maturity);
    args.steps = args.steps.or(cfg.steps);
    args.paths = args.paths.or(cfg.paths);
    args.seed = args.seed.or(cfg.seed);
    args.out = args.out.or(cfg.out);

    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::Input("missing --out directory".into()))?;
    let params = MarketParams::new(
        args.x1.unwrap_or(1.0),
        args.x2.unwrap_or(1.0),
        args.sigma1.unwrap_or(0.2),
        args.sigma2.unwrap_or(0.2),
        args.maturity.unwrap_or(1.0),
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    let steps = args.steps.unwrap_or(200);
    let paths = args.paths.unwrap_or(100_000);
    let seed = args.seed.unwrap_or(0);
    if steps == 0 {
        return Err(CliError::Input("--steps must be at least 1".into()));
    }
    if paths == 0 {
        return Err(CliError::Input("--paths must be at least 1".into()));
    }

    let surface = price_exchange_double(&params, steps).map_err(engine_err)?;
    let phi0 = exchange::exchange_reward(0.0, params.x1, params.x2, &params).map_err(engine_err)?;
    if surface.v0() + 1e-12 < phi0 || surface.v0() > params.x1 + 1e-12 {
        return Err(CliError::Property(format!(
            "root value {} escapes the bounds [{phi0}, {}]",
            surface.v0(),
            params.x1
        )));
    }
    let policy = optimal_pair_policy(&surface);
    let mc = mc_policy_value(&params, steps, McPolicy::LatticeRule(policy), paths, seed)
        .map_err(engine_err)?;

    fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;

    let price = format!(
        "{{\n  \"v0\": {},\n  \"margrabe\": {},\n  \"phi0\": {},\n  \"n\": {},\n  \"mc_estimate\": {},\n  \"mc_se\": {}\n}}\n",
        f64_repr(surface.v0()),
        f64_repr(exchange::margrabe_value(&params)),
        f64_repr(phi0),
        steps,
        f64_repr(mc.estimate),
        f64_repr(mc.std_error),
    );
    write_out(&out, "price.json", &price)?;

    // The surface has (n+1)^3 / 3 states; stream it instead of buffering.
    stream_csv(
        &out,
        "surface.csv",
        "k,t,j1,j2,x1,x2,phi,v,exercise,B",
        |w| {
            for st in surface.states() {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{}",
                    st.k,
                    f64_repr(st.t),
                    st.j1,
                    st.j2,
                    f64_repr(st.x1),
                    f64_repr(st.x2),
                    f64_repr(st.reward),
                    f64_repr(st.value),
                    bool_repr(st.exercise),
                    bool_repr(st.b_flag),
                )?;
            }
            Ok(())
        },
    )?;

    stream_csv(&out, "boundary.csv", "k,axis,index,frontier", |w| {
        for row in exercise_boundary(&surface) {
            writeln!(w, "{},{},{},{}", row.k, row.axis, row.index, row.frontier)?;
        }
        Ok(())
    })?;
    Ok(())
}

fn stream_csv(
    dir: &Path,
    name: &str,
    header: &str,
    body: impl FnOnce(&mut io::BufWriter<fs::File>) -> io::Result<()>,
) -> Result<(), CliError> {
    let path = dir.join(name);
    let report = |e: io::Error| CliError::Input(format!("cannot write {}: {e}", path.display()));
    let file = fs::File::create(&path).map_err(report)?;
    let mut writer = io::BufWriter::new(file);
    writeln!(writer, "{header}").map_err(report)?;
    body(&mut writer).map_err(report)?;
    writer.flush().map_err(report)
}
