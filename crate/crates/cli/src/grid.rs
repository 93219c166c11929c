//! Parameter grids for the `bounds-table` subcommand.

use std::io::Write;

use cvtomo::complexity::{BoundQuery, SampleCount};

use crate::CliError;

/// Axis values of a bounds table; the table is their Cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n: Vec<usize>,
    pub k: Vec<u32>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub photons: Vec<f64>,
    pub t: Vec<Option<usize>>,
    pub kappa: Vec<Option<usize>>,
}

impl GridSpec {
    /// Every query of the grid, in row-major order of the axes as listed in
    /// the struct.
    pub fn queries(&self) -> Vec<BoundQuery> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &k in &self.k {
                for &eps in &self.eps {
                    for &delta in &self.delta {
                        for &photons in &self.photons {
                            for &t in &self.t {
                                for &kappa in &self.kappa {
                                    out.push(BoundQuery {
                                        n,
                                        k,
                                        eps,
                                        delta,
                                        photons,
                                        t,
                                        kappa,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_f64(key: &str, s: &str) -> Result<f64, CliError> {
    s.trim()
        .parse()
        .map_err(|_| usage(format!("grid axis {key}: cannot parse {s:?}")))
}

/// Values of one axis: `a,b,c`, an inclusive integer range `a:b`, or a
/// linear range `start:stop:count`.
fn parse_values(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for item in text.split(',') {
        let parts: Vec<&str> = item.split(':').collect();
        match parts.as_slice() {
            [x] => out.push(parse_f64(key, x)?),
            [a, b] => {
                let (a, b) = (parse_f64(key, a)?, parse_f64(key, b)?);
                if a.fract() != 0.0 || b.fract() != 0.0 || b < a {
                    return Err(usage(format!("grid axis {key}: bad integer range {item:?}")));
                }
                let mut x = a;
                while x <= b {
                    out.push(x);
                    x += 1.0;
                }
            }
            [a, b, c] => {
                let (a, b) = (parse_f64(key, a)?, parse_f64(key, b)?);
                let count: usize = c
                    .trim()
                    .parse()
                    .map_err(|_| usage(format!("grid axis {key}: bad count in {item:?}")))?;
                match count {
                    0 => return Err(usage(format!("grid axis {key}: empty range {item:?}"))),
                    1 => out.push(a),
                    _ => out.extend(
                        (0..count).map(|i| a + (b - a) * i as f64 / (count - 1) as f64),
                    ),
                }
            }
            _ => return Err(usage(format!("grid axis {key}: cannot parse {item:?}"))),
        }
    }
    Ok(out)
}

fn integers(key: &str, values: Vec<f64>) -> Result<Vec<usize>, CliError> {
    values
        .into_iter()
        .map(|x| {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                Err(usage(format!("grid axis {key} takes non-negative integers, got {x}")))
            }
        })
        .collect()
}

/// Parses `key=values;key=values;...`. Keys `n`, `eps`, `delta` and
/// `photons` are required; `k` defaults to 1, and `t`, `kappa` are optional.
pub fn parse_grid(spec: &str) -> Result<GridSpec, CliError> {
    let mut grid = GridSpec {
        n: Vec::new(),
        k: vec![1],
        eps: Vec::new(),
        delta: Vec::new(),
        photons: Vec::new(),
        t: vec![None],
        kappa: vec![None],
    };
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| usage(format!("grid entry {part:?} is not key=values")))?;
        let key = key.trim();
        let values = parse_values(key, values)?;
        match key {
            "n" => grid.n = integers(key, values)?,
            "k" => {
                grid.k = integers(key, values)?.into_iter().map(|x| x as u32).collect()
            }
            "eps" => grid.eps = values,
            "delta" => grid.delta = values,
            "photons" => grid.photons = values,
            "t" => grid.t = integers(key, values)?.into_iter().map(Some).collect(),
            "kappa" => grid.kappa = integers(key, values)?.into_iter().map(Some).collect(),
            _ => return Err(usage(format!("unknown grid axis {key:?}"))),
        }
    }
    for (key, empty) in [
        ("n", grid.n.is_empty()),
        ("eps", grid.eps.is_empty()),
        ("delta", grid.delta.is_empty()),
        ("photons", grid.photons.is_empty()),
    ] {
        if empty {
            return Err(usage(format!("grid axis {key} is required")));
        }
    }
    Ok(grid)
}

/// Column names of the bounds table, in output order.
pub const TABLE_HEADER: [&str; 16] = [
    "n_modes",
    "k_moment_order",
    "epsilon",
    "delta",
    "N_phot_per_mode",
    "t_compressible_modes",
    "kappa_gate_locality",
    "m_cutoff",
    "d_eff",
    "r_eff",
    "N_lower_pure",
    "N_lower_mixed",
    "N_upper_pure",
    "N_upper_mixed",
    "N_lower_t_compressible",
    "upper_saturated",
];

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn count(c: &SampleCount) -> String {
    c.value.to_string()
}

/// Writes one CSV row per grid point. Rows whose formulas reject the
/// parameters are skipped with a note on stderr.
pub fn write_table(spec: &GridSpec, w: &mut dyn Write) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TABLE_HEADER)?;
    for q in spec.queries() {
        let row = match q.evaluate() {
            Ok(row) => row,
            Err(e) => {
                eprintln!("skipping {q:?}: {e}");
                continue;
            }
        };
        csv.write_record([
            q.n.to_string(),
            q.k.to_string(),
            q.eps.to_string(),
            q.delta.to_string(),
            q.photons.to_string(),
            opt(q.t),
            opt(q.kappa),
            row.effective_dimension.m.to_string(),
            row.effective_dimension.dim.to_string(),
            row.effective_rank.dim.to_string(),
            row.lower_pure.to_string(),
            row.lower_mixed.to_string(),
            count(&row.upper_pure),
            count(&row.upper_mixed),
            opt(row.lower_t_compressible),
            (row.upper_pure.saturated || row.upper_mixed.saturated).to_string(),
        ])?;
    }
    csv.flush().map_err(|source| CliError::Io {
        context: "cannot write table".into(),
        source,
    })
}
