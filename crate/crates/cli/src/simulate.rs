use std::fs::File;
use std::io::BufWriter;

use fsvol::data::write_price_csv;
use fsvol::sim::{fixture, read_truth, simulate_prices, write_truth, TruthFile};
use fsvol::{Error, Result, ViolationCode};
use serde_json::json;

use crate::manifest::{self, Manifest};
use crate::SimulateArgs;

pub fn run(args: SimulateArgs) -> Result<()> {
    let started = manifest::now_utc();
    let mut inputs = Vec::new();
    let (source, mut truth) = match (&args.fixture, &args.truth) {
        (Some(name), _) => (name.clone(), fixture(name)?),
        (None, Some(path)) => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            let tf = read_truth(f).map_err(|e| Error::Format { path: path.clone(), detail: e.to_string() })?;
            inputs.push(manifest::input(path)?);
            (path.display().to_string(), tf.truth)
        }
        (None, None) => return Err(Error::invalid(ViolationCode::UnknownFixture, "give --fixture or --truth")),
    };
    if let Some(s) = args.seed {
        truth.seed = s;
    }
    if let Some(n) = args.n_obs {
        truth.n_obs = n;
    }
    let bad = truth.violations();
    if !bad.is_empty() {
        return Err(Error::Invalid(bad));
    }

    let (prices, latent) = simulate_prices(&truth)?;
    manifest::create_dir(&args.out)?;
    let path = args.out.join("prices.csv");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_price_csv(&prices, BufWriter::new(f))?;

    let path = args.out.join("truth.json");
    let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let tf = TruthFile { names: prices.names.clone(), truth: truth.clone(), latent };
    write_truth(&tf, BufWriter::new(f)).map_err(|e| Error::Format { path, detail: e.to_string() })?;

    let mut m = Manifest::new("simulate", started);
    m.seed = Some(truth.seed);
    m.config = json!({ "source": source, "n_obs": truth.n_obs, "ar_sign": truth.ar_sign });
    m.inputs = inputs;
    m.notes = json!({ "n_series": prices.names.len(), "n_prices": prices.dates.len() });
    m.write(&args.out)
}
