use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelError, PriorSpec, Simulator};
use crate::exec::{self, Execution};
use crate::numerics::{DenseMatrix, RngStream};

pub const TABLE_MAGIC: &[u8; 4] = b"GBCT";
pub const TABLE_VERSION: u32 = 1;

/// On-disk encodings of a [`ReferenceTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// `.bin`/`.gbct` map to binary, anything else to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("gbct") => TableFormat::Binary,
            _ => TableFormat::Csv,
        }
    }
}

/// Simulated pairs `(θ⁽ⁱ⁾, y⁽ⁱ⁾)`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub theta: DenseMatrix,
    pub y: DenseMatrix,
    pub seed: u64,
    pub simulator: String,
    /// Not persisted; `None` for tables read from disk.
    pub prior: Option<PriorSpec>,
}

impl ReferenceTable {
    pub fn new(
        theta: DenseMatrix,
        y: DenseMatrix,
        seed: u64,
        simulator: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if theta.rows() != y.rows() {
            return Err(ModelError::DimensionMismatch {
                expected: theta.rows(),
                found: y.rows(),
            });
        }
        if let Some(i) = theta.data().iter().chain(y.data()).position(|v| !v.is_finite()) {
            let row = if i < theta.data().len() {
                i / theta.cols().max(1)
            } else {
                (i - theta.data().len()) / y.cols().max(1)
            };
            return Err(ModelError::NonFiniteOutput { row });
        }
        Ok(Self {
            theta,
            y,
            seed,
            simulator: simulator.into(),
            prior: None,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn theta_dim(&self) -> usize {
        self.theta.cols()
    }

    pub fn y_dim(&self) -> usize {
        self.y.cols()
    }

    /// Rows `[0, at)` and `[at, N)`.
    pub fn split_at(&self, at: usize) -> (ReferenceTable, ReferenceTable) {
        let at = at.min(self.len());
        let part = |lo: usize, hi: usize| {
            let take = |m: &DenseMatrix| {
                let c = m.cols();
                DenseMatrix::from_vec(hi - lo, c, m.data()[lo * c..hi * c].to_vec())
                    .expect("slice of a valid matrix")
            };
            ReferenceTable {
                theta: take(&self.theta),
                y: take(&self.y),
                seed: self.seed,
                simulator: self.simulator.clone(),
                prior: self.prior.clone(),
            }
        };
        (part(0, at), part(at, self.len()))
    }

    /// Training rows first 90%, held-out rows the remaining 10%.
    pub fn holdout_split(&self) -> (ReferenceTable, ReferenceTable) {
        let n_train = self.len() - self.len() / 10;
        self.split_at(n_train)
    }

    fn header(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.len(),
            self.theta_dim(),
            self.y_dim(),
            self.seed,
            self.simulator
        )
    }

    /// Header `N,d,n,seed,simulator`, then rows `θ…,y…` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{}", self.header())?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for (k, v) in self.theta.row(i).iter().chain(self.y.row(i)).enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format_real(*v));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, ModelError> {
        let mut lines = BufReader::new(r).lines();
        let header = lines.next().ok_or(ModelError::Format {
            line: 1,
            msg: "empty file".into(),
        })??;
        let fields: Vec<&str> = header.splitn(5, ',').collect();
        if fields.len() != 5 {
            return Err(ModelError::Format {
                line: 1,
                msg: "header must be N,d,n,seed,simulator".into(),
            });
        }
        let int = |s: &str| -> Result<u64, ModelError> {
            s.trim().parse().map_err(|e| ModelError::Format {
                line: 1,
                msg: format!("'{s}': {e}"),
            })
        };
        let (n_rows, d, n, seed) = (
            int(fields[0])? as usize,
            int(fields[1])? as usize,
            int(fields[2])? as usize,
            int(fields[3])?,
        );
        let name = fields[4].trim().to_string();
        let mut theta = Vec::with_capacity(n_rows * d);
        let mut y = Vec::with_capacity(n_rows * n);
        let mut rows = 0;
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = idx + 2;
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| ModelError::Format {
                        line: lineno,
                        msg: format!("'{s}': {e}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            if vals.len() != d + n {
                return Err(ModelError::Format {
                    line: lineno,
                    msg: format!("expected {} fields, found {}", d + n, vals.len()),
                });
            }
            theta.extend_from_slice(&vals[..d]);
            y.extend_from_slice(&vals[d..]);
            rows += 1;
        }
        if rows != n_rows {
            return Err(ModelError::Format {
                line: rows + 1,
                msg: format!("header declares {n_rows} rows, found {rows}"),
            });
        }
        Self::new(
            DenseMatrix::from_vec(rows, d, theta)?,
            DenseMatrix::from_vec(rows, n, y)?,
            seed,
            name,
        )
    }

    /// `GBCT`, version, N, d, n (u32 LE), seed (u64 LE), name length (u32 LE)
    /// and UTF-8 name, then each row `θ…,y…` as f64 LE.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut w = BufWriter::new(w);
        let u32_of = |v: usize| -> Result<u32, ModelError> {
            u32::try_from(v).map_err(|_| ModelError::InvalidParameter(format!("{v} exceeds u32")))
        };
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&TABLE_VERSION.to_le_bytes())?;
        for v in [self.len(), self.theta_dim(), self.y_dim()] {
            w.write_all(&u32_of(v)?.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&u32_of(self.simulator.len())?.to_le_bytes())?;
        w.write_all(self.simulator.as_bytes())?;
        for i in 0..self.len() {
            for v in self.theta.row(i).iter().chain(self.y.row(i)) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self, ModelError> {
        let mut r = BufReader::new(r);
        let bad = |msg: &str| ModelError::Format {
            line: 0,
            msg: msg.to_string(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut BufReader<R>| -> Result<u32, ModelError> {
            r.read_exact(&mut u32_buf)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != TABLE_VERSION {
            return Err(bad(&format!("unsupported table version {version}")));
        }
        let n_rows = read_u32(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let mut u64_buf = [0u8; 8];
        r.read_exact(&mut u64_buf)?;
        let seed = u64::from_le_bytes(u64_buf);
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("simulator name is not UTF-8"))?;
        let mut theta = Vec::with_capacity(n_rows * d);
        let mut y = Vec::with_capacity(n_rows * n);
        for _ in 0..n_rows {
            for k in 0..d + n {
                r.read_exact(&mut u64_buf)?;
                let v = f64::from_le_bytes(u64_buf);
                if k < d {
                    theta.push(v);
                } else {
                    y.push(v);
                }
            }
        }
        if r.read(&mut u64_buf)? != 0 {
            return Err(bad("trailing bytes after payload"));
        }
        Self::new(
            DenseMatrix::from_vec(n_rows, d, theta)?,
            DenseMatrix::from_vec(n_rows, n, y)?,
            seed,
            name,
        )
    }

    pub fn save(&self, path: &Path, format: TableFormat) -> Result<(), ModelError> {
        let f = File::create(path)?;
        match format {
            TableFormat::Csv => self.write_csv(f),
            TableFormat::Binary => self.write_binary(f),
        }
    }

    /// Detects the encoding from the leading magic bytes.
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut f = File::open(path)?;
        let mut magic = [0u8; 4];
        let got = f.read(&mut magic)?;
        drop(f);
        let f = File::open(path)?;
        if got == 4 && &magic == TABLE_MAGIC {
            Self::read_binary(f)
        } else {
            Self::read_csv(f)
        }
    }
}

/// Shortest-exact scientific notation with 17 significant digits.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Draws `θ⁽ⁱ⁾ ~ prior` and `y⁽ⁱ⁾ ~ simulator(θ⁽ⁱ⁾)` for `i < n`. Row `i` uses
/// only `rng.substream(i)`, so the table does not depend on execution mode.
pub fn generate_reference_table(
    prior: &PriorSpec,
    simulator: &dyn Simulator,
    n: usize,
    rng: &RngStream,
    execution: Execution,
) -> Result<ReferenceTable, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParameter("table needs N >= 1 rows".into()));
    }
    if prior.dim() != simulator.theta_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: simulator.theta_dim(),
            found: prior.dim(),
        });
    }
    let rows = exec::try_map_indexed(execution, n, |i| {
        let mut s = rng.substream(i as u64);
        let theta = prior.sample(&mut s);
        simulate_row(simulator, i, theta, &mut s)
    })?;
    let mut table = assemble(rows, simulator, rng.seed())?;
    table.prior = Some(prior.clone());
    Ok(table)
}

/// Simulates at fixed parameter rows (e.g. a space-filling design).
pub fn simulate_design(
    design: &DenseMatrix,
    simulator: &dyn Simulator,
    rng: &RngStream,
    execution: Execution,
) -> Result<ReferenceTable, ModelError> {
    if design.cols() != simulator.theta_dim() {
        return Err(ModelError::DimensionMismatch {
            expected: simulator.theta_dim(),
            found: design.cols(),
        });
    }
    let rows = exec::try_map_indexed(execution, design.rows(), |i| {
        let mut s = rng.substream(i as u64);
        simulate_row(simulator, i, design.row(i).to_vec(), &mut s)
    })?;
    assemble(rows, simulator, rng.seed())
}

fn simulate_row(
    simulator: &dyn Simulator,
    row: usize,
    theta: Vec<f64>,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let y = simulator
        .simulate(&theta, rng)
        .map_err(|e| ModelError::SimulatorFailed {
            row,
            source: Box::new(e),
        })?;
    if y.len() != simulator.output_dim() {
        return Err(ModelError::SimulatorFailed {
            row,
            source: Box::new(ModelError::DimensionMismatch {
                expected: simulator.output_dim(),
                found: y.len(),
            }),
        });
    }
    if theta.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(ModelError::NonFiniteOutput { row });
    }
    Ok((theta, y))
}

fn assemble(
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    simulator: &dyn Simulator,
    seed: u64,
) -> Result<ReferenceTable, ModelError> {
    let n = rows.len();
    let (d, m) = (simulator.theta_dim(), simulator.output_dim());
    let mut theta = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * m);
    for (t, v) in rows {
        theta.extend(t);
        y.extend(v);
    }
    ReferenceTable::new(
        DenseMatrix::from_vec(n, d, theta)?,
        DenseMatrix::from_vec(n, m, y)?,
        seed,
        simulator.name(),
    )
}
