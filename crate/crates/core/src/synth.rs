//! Synthetic coverage-regression data: label distributions, patch rendering,
//! splits and the `.ugeldata` container.
//!
//! A patch is an `S × S` grid whose target is the fraction of foreground
//! pixels. Foreground is chosen by ranking a smoothed noise field, so the
//! realised fraction is exactly `round(y·S²)/S²`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, stream};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"UGELDATA";
const SMOOTH_RADIUS: usize = 2;
const JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `w_low·Beta(a_low, b_low) + w_high·Beta(a_high, b_high)`, remainder uniform.
    Bimodal {
        w_low: f64,
        a_low: f64,
        b_low: f64,
        w_high: f64,
        a_high: f64,
        b_high: f64,
    },
    NegSkewed { alpha: f64, beta: f64 },
    Uniform,
    /// Normal truncated to `[0, 1]` by rejection.
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub shape: Shape,
    /// Probability of an exact 0 or 1 label (split evenly), drawn before the shape.
    #[serde(default)]
    pub endpoint_mass: f64,
}

impl LabelDistribution {
    pub fn bimodal() -> Self {
        Shape::Bimodal {
            w_low: 0.35,
            a_low: 1.0,
            b_low: 20.0,
            w_high: 0.35,
            a_high: 20.0,
            b_high: 1.0,
        }
        .into()
    }

    pub fn neg_skewed() -> Self {
        Shape::NegSkewed { alpha: 5.0, beta: 2.0 }.into()
    }

    pub fn uniform() -> Self {
        Shape::Uniform.into()
    }

    pub fn gaussian() -> Self {
        Shape::Gaussian { mean: 0.5, sd: 0.15 }.into()
    }

    pub fn with_endpoint_mass(mut self, mass: f64) -> Self {
        self.endpoint_mass = mass;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::Bimodal { .. } => "bimodal",
            Shape::NegSkewed { .. } => "negskew",
            Shape::Uniform => "uniform",
            Shape::Gaussian { .. } => "gaussian",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(0.0..=1.0).contains(&self.endpoint_mass) {
            return bad(format!("endpoint_mass {} outside [0, 1]", self.endpoint_mass));
        }
        let positive = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        match self.shape {
            Shape::Bimodal {
                w_low,
                a_low,
                b_low,
                w_high,
                a_high,
                b_high,
            } => {
                if !(w_low >= 0.0 && w_high >= 0.0 && w_low + w_high <= 1.0) {
                    return bad(format!("bimodal weights {w_low}, {w_high} must be non-negative and sum to at most 1"));
                }
                if !positive(&[a_low, b_low, a_high, b_high]) {
                    return bad("bimodal shape parameters must be positive".into());
                }
            }
            Shape::NegSkewed { alpha, beta } => {
                if !positive(&[alpha, beta]) {
                    return bad("beta shape parameters must be positive".into());
                }
            }
            Shape::Uniform => {}
            Shape::Gaussian { mean, sd } => {
                if !positive(&[sd]) || !mean.is_finite() {
                    return bad(format!("gaussian needs finite mean and positive sd, got {mean}, {sd}"));
                }
                // keeps the rejection loop's acceptance rate sane
                if !(-1.0..=2.0).contains(&mean) {
                    return bad(format!("gaussian mean {mean} too far outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.endpoint_mass > 0.0 && rng.gen::<f64>() < self.endpoint_mass {
            return if rng.gen::<bool>() { 1.0 } else { 0.0 };
        }
        let y = match self.shape {
            Shape::Bimodal {
                w_low,
                a_low,
                b_low,
                w_high,
                a_high,
                b_high,
            } => {
                let u: f64 = rng.gen();
                if u < w_low {
                    Beta::new(a_low, b_low).expect("validated").sample(rng)
                } else if u < w_low + w_high {
                    Beta::new(a_high, b_high).expect("validated").sample(rng)
                } else {
                    rng.gen()
                }
            }
            Shape::NegSkewed { alpha, beta } => Beta::new(alpha, beta).expect("validated").sample(rng),
            Shape::Uniform => rng.gen(),
            Shape::Gaussian { mean, sd } => {
                let n = Normal::new(mean, sd).expect("validated");
                loop {
                    let y = n.sample(rng);
                    if (0.0..=1.0).contains(&y) {
                        break y;
                    }
                }
            }
        };
        y.clamp(0.0, 1.0)
    }
}

impl From<Shape> for LabelDistribution {
    fn from(shape: Shape) -> Self {
        Self {
            shape,
            endpoint_mass: 0.0,
        }
    }
}

impl std::str::FromStr for LabelDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bimodal" => Ok(Self::bimodal()),
            "negskew" | "neg_skewed" => Ok(Self::neg_skewed()),
            "uniform" => Ok(Self::uniform()),
            "gaussian" => Ok(Self::gaussian()),
            other => Err(Error::InvalidArgument(format!(
                "unknown distribution `{other}` (expected bimodal, negskew, uniform or gaussian)"
            ))),
        }
    }
}

pub fn sample_targets<R: Rng>(dist: &LabelDistribution, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample_targets needs n >= 1".into()));
    }
    dist.validate()?;
    Ok((0..n).map(|_| dist.draw(rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub id: u64,
    pub side: usize,
    /// Row-major `side × side` intensities in `[0, 1]`.
    pub pixels: Vec<f64>,
    /// Realised foreground fraction.
    pub y: f64,
}

impl Patch {
    /// Pixels above one half.
    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.5).count()
    }
}

fn box_blur(field: &[f64], side: usize, horizontal: bool) -> Vec<f64> {
    let r = SMOOTH_RADIUS as isize;
    let n = side as isize;
    let scale = 1.0 / (2 * r + 1) as f64;
    let mut out = vec![0.0; field.len()];
    for row in 0..n {
        for col in 0..n {
            let mut acc = 0.0;
            for k in -r..=r {
                let (rr, cc) = if horizontal {
                    (row, (col + k).rem_euclid(n))
                } else {
                    ((row + k).rem_euclid(n), col)
                };
                acc += field[(rr * n + cc) as usize];
            }
            out[(row * n + col) as usize] = acc * scale;
        }
    }
    out
}

/// Renders a patch with exactly `round(y·S²)` foreground pixels.
pub fn render_patch<R: Rng>(id: u64, y: f64, side: usize, rng: &mut R) -> Result<Patch> {
    if side < 4 {
        return Err(Error::InvalidArgument(format!("patch side must be at least 4, got {side}")));
    }
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::domain("render_patch", format!("coverage {y} outside [0, 1]")));
    }
    let area = side * side;
    let count = (y * area as f64).round() as usize;
    let noise: Vec<f64> = (0..area).map(|_| rng.gen()).collect();
    let smooth = box_blur(&box_blur(&noise, side, true), side, false);
    let mut order: Vec<usize> = (0..area).collect();
    order.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]).then(a.cmp(&b)));
    let mut fg = vec![false; area];
    for &i in &order[..count] {
        fg[i] = true;
    }
    let pixels = fg
        .iter()
        .map(|&on| {
            let j = JITTER * rng.gen::<f64>();
            if on {
                1.0 - j
            } else {
                j
            }
        })
        .collect();
    Ok(Patch {
        id,
        side,
        pixels,
        y: count as f64 / area as f64,
    })
}

/// Generation parameters, echoed into every saved file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub distribution: LabelDistribution,
    pub n_pool: usize,
    pub n_test: usize,
    pub side: usize,
    pub seed: u64,
}

/// A generated pool (all with hidden labels) and a labelled test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub pool: Vec<Patch>,
    pub test: Vec<Patch>,
}

/// The three disjoint splits a run starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub labelled: Vec<Patch>,
    pub unlabelled: Vec<Patch>,
    pub test: Vec<Patch>,
}

impl Dataset {
    pub fn generate(dist: LabelDistribution, n_pool: usize, n_test: usize, side: usize, seed: u64) -> Result<Self> {
        if n_pool == 0 {
            return Err(Error::InvalidArgument("pool must hold at least one patch".into()));
        }
        let total = n_pool + n_test;
        let mut label_rng = ChaCha8Rng::seed_from_u64(derive(seed, &[0]));
        let ys = sample_targets(&dist, total, &mut label_rng)?;
        let patch_seed = derive(seed, &[1]);
        let mut patches = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                let mut rng = ChaCha8Rng::seed_from_u64(stream(patch_seed, i as u64));
                render_patch(i as u64, y, side, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let test = patches.split_off(n_pool);
        Ok(Self {
            header: DatasetHeader {
                version: FORMAT_VERSION,
                distribution: dist,
                n_pool,
                n_test,
                side,
                seed,
            },
            pool: patches,
            test,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.header.side * self.header.side
    }

    /// Moves `m` pool patches, chosen by a `seed`-driven permutation, into the labelled split.
    pub fn split(&self, m: usize, seed: u64) -> Result<Splits> {
        if m > self.pool.len() {
            return Err(Error::PoolExhausted {
                available: self.pool.len(),
                required: m,
            });
        }
        let mut order: Vec<usize> = (0..self.pool.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let labelled = order[..m].iter().map(|&i| self.pool[i].clone()).collect();
        let mut rest = order[m..].to_vec();
        rest.sort_unstable();
        Ok(Splits {
            labelled,
            unlabelled: rest.into_iter().map(|i| self.pool[i].clone()).collect(),
            test: self.test.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::Format {
            path: path.into(),
            detail: e.to_string(),
        })?;
        let per = 16 + 8 * self.input_dim();
        let mut buf = Vec::with_capacity(16 + header.len() + per * (self.pool.len() + self.test.len()));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for p in self.pool.iter().chain(&self.test) {
            buf.extend_from_slice(&p.id.to_le_bytes());
            buf.extend_from_slice(&p.y.to_le_bytes());
            for v in &p.pixels {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader { bytes: &bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.malformed("missing UGELDATA magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.into(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = r.u32()? as usize;
        let header: DatasetHeader =
            serde_json::from_slice(r.take(len)?).map_err(|e| r.malformed(&format!("bad header: {e}")))?;
        if header.version != version {
            return Err(r.malformed("header version disagrees with the preamble"));
        }
        let area = header.side * header.side;
        let mut read = |n: usize| -> Result<Vec<Patch>> {
            (0..n)
                .map(|_| {
                    let id = r.u64()?;
                    let y = r.f64()?;
                    let pixels = (0..area).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                    Ok(Patch {
                        id,
                        side: header.side,
                        pixels,
                        y,
                    })
                })
                .collect()
        };
        let pool = read(header.n_pool)?;
        let test = read(header.n_test)?;
        if r.pos != bytes.len() {
            return Err(r.malformed(&format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { header, pool, test })
    }
}

pub fn make_dataset(
    dist: LabelDistribution,
    n_pool: usize,
    n_test: usize,
    m: usize,
    side: usize,
    seed: u64,
) -> Result<Splits> {
    Dataset::generate(dist, n_pool, n_test, side, seed)?.split(m, derive(seed, &[2]))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, detail: &str) -> Error {
        Error::Format {
            path: self.path.into(),
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.malformed(&format!("truncated at byte {}", self.bytes.len())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
