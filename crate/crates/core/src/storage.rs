//! On-disk formats.
//!
//! * Vector file (`.danv`): magic `DANV`, `u16` version, `u8` dtype tag,
//!   `u32` rows, `u32` cols, then row-major little-endian values.
//! * World directory: `attributes.txt` (one name per line), `concepts.tsv`
//!   (`concept`, `category`, `split`, attribute bitstring, vector file),
//!   `vectors/<concept>.danv`, optional `render_map.danv`, and `world.json`.
//! * Checkpoint (`.danc`): magic `DANC`, `u16` version, `u8` model kind,
//!   `u8` dtype, `u16` dim count and `u32` dims, `u64` seed, `u32`-prefixed
//!   config JSON, `u16` block count, then per block a `u16`-prefixed name and
//!   a `u64`-prefixed vector file.
//!
//! All integers are little-endian. Files are written to a temporary sibling
//! and renamed into place.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{AblationParams, AttrClassifierParams};
use crate::dataset::{split_concepts, AttributeSpace, AttributeVector, Concept, Split, SplitRatios, World};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DanDims, DanOptions, DanParams};
use crate::params::{ModelKind, Parameters};
use crate::rng::Rng;
use crate::scalar::{DType, Scalar};
use crate::trainer::Trained;

pub const VECTOR_MAGIC: [u8; 4] = *b"DANV";
pub const VECTOR_VERSION: u16 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DANC";
pub const CHECKPOINT_VERSION: u16 = 1;
pub const WORLD_VERSION: u32 = 1;
const VECTOR_HEADER: usize = 4 + 2 + 1 + 4 + 4;

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor that reports truncation instead of panicking.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn finish(&self) -> Result<()> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            extra => Err(Error::Trailing(extra)),
        }
    }
}

fn check_magic(found: [u8; 4], expected: [u8; 4]) -> Result<()> {
    if found != expected {
        return Err(Error::Magic { expected, found });
    }
    Ok(())
}

fn dtype_tag(tag: u8) -> Result<DType> {
    DType::from_tag(tag).ok_or_else(|| Error::Parameter(format!("unknown dtype tag {tag}")))
}

pub fn encode_matrix<T: Scalar>(m: &Matrix<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(VECTOR_HEADER + m.len() * T::DTYPE.size());
    out.extend_from_slice(&VECTOR_MAGIC);
    out.extend_from_slice(&VECTOR_VERSION.to_le_bytes());
    out.push(T::DTYPE as u8);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &x in m.as_slice() {
        x.write_le(&mut out);
    }
    out
}

fn read_values<T: Scalar, S: Scalar>(payload: &[u8]) -> Vec<T> {
    payload
        .chunks_exact(S::DTYPE.size())
        .map(|c| T::of(S::read_le(c).as_f64()))
        .collect()
}

/// Decodes a vector file. Values stored in another precision are converted
/// through `f64`; same-precision decoding is bitwise.
pub fn decode_matrix<T: Scalar>(bytes: &[u8]) -> Result<Matrix<T>> {
    let mut r = Reader::new(bytes);
    check_magic(r.array()?, VECTOR_MAGIC)?;
    let version = r.u16()?;
    if version != VECTOR_VERSION {
        return Err(Error::Version {
            found: version,
            supported: VECTOR_VERSION,
        });
    }
    let dtype = dtype_tag(r.u8()?)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| Error::Parameter(format!("vector file shape {rows}×{cols} overflows")))?;
    let payload = r.take(n)?;
    r.finish()?;
    let data = if dtype == T::DTYPE {
        payload.chunks_exact(dtype.size()).map(T::read_le).collect()
    } else {
        match dtype {
            DType::F32 => read_values::<T, f32>(payload),
            DType::F64 => read_values::<T, f64>(payload),
        }
    };
    Matrix::from_vec(rows, cols, data)
}

pub fn write_vector_file<T: Scalar>(path: &Path, m: &Matrix<T>) -> Result<()> {
    write_atomic(path, &encode_matrix(m))
}

pub fn read_vector_file<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    decode_matrix(&read(path)?).map_err(|e| e.in_file(path))
}

/// Metadata stored next to a world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldMeta {
    pub format: u32,
    pub dtype: String,
    pub dim: usize,
    pub n_attributes: usize,
    pub n_concepts: usize,
    pub noise_std: Option<f64>,
    pub render_map: bool,
    /// Free-form record of how the world was made (generator config, seed).
    #[serde(default)]
    pub provenance: serde_json::Value,
}

const CONCEPTS_HEADER: &str = "concept\tcategory\tsplit\tattributes\tvectors";

fn vector_name(id: &str) -> String {
    format!("vectors/{id}.danv")
}

fn check_id(id: &str) -> Result<()> {
    let bad = id.is_empty()
        || id.contains(['\t', '\n', '/', '\\'])
        || id == "."
        || id == "..";
    if bad {
        return Err(Error::Parameter(format!("concept id `{id}` cannot be used as a file name")));
    }
    Ok(())
}

pub fn save_world<T: Scalar>(world: &World<T>, dir: &Path, provenance: serde_json::Value) -> Result<()> {
    fs::create_dir_all(dir.join("vectors")).map_err(|e| Error::io(dir, e))?;
    let mut names = String::new();
    for n in world.space.names() {
        names.push_str(n);
        names.push('\n');
    }
    write_atomic(&dir.join("attributes.txt"), names.as_bytes())?;

    let mut table = String::from(CONCEPTS_HEADER);
    table.push('\n');
    for ((c, m), split) in world.concepts.iter().zip(&world.instances).zip(&world.splits) {
        check_id(&c.id)?;
        let file = vector_name(&c.id);
        table.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", c.id, c.category, split, c.attributes.to_bitstring(), file));
        write_vector_file(&dir.join(&file), m)?;
    }
    write_atomic(&dir.join("concepts.tsv"), table.as_bytes())?;
    if let Some(g) = &world.render_map {
        write_vector_file(&dir.join("render_map.danv"), g)?;
    }
    let meta = WorldMeta {
        format: WORLD_VERSION,
        dtype: T::DTYPE.name().into(),
        dim: world.dim(),
        n_attributes: world.n_attributes(),
        n_concepts: world.concepts.len(),
        noise_std: world.noise_std,
        render_map: world.render_map.is_some(),
        provenance,
    };
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_atomic(&dir.join("world.json"), &json)
}

fn parse_attributes(text: &str) -> Result<AttributeSpace> {
    AttributeSpace::new(text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect())
}

pub fn read_world_meta(dir: &Path) -> Result<WorldMeta> {
    let meta: WorldMeta = serde_json::from_str(&read_text(&dir.join("world.json"))?)?;
    if meta.format != WORLD_VERSION {
        return Err(Error::Version {
            found: meta.format as u16,
            supported: WORLD_VERSION as u16,
        });
    }
    Ok(meta)
}

pub fn load_world<T: Scalar>(dir: &Path) -> Result<World<T>> {
    let meta = read_world_meta(dir)?;
    let space = parse_attributes(&read_text(&dir.join("attributes.txt"))?)?;
    let table = read_text(&dir.join("concepts.tsv"))?;
    let mut concepts = Vec::new();
    let mut instances = Vec::new();
    let mut splits = Vec::new();
    for (i, line) in table.lines().enumerate() {
        let line_no = i + 1;
        if i == 0 {
            if line != CONCEPTS_HEADER {
                return Err(Error::Malformed {
                    what: "concepts.tsv",
                    line: line_no,
                    msg: format!("expected header `{CONCEPTS_HEADER}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Malformed {
                what: "concepts.tsv",
                line: line_no,
                msg: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let split: Split = fields[2].parse().map_err(|e: Error| Error::Malformed {
            what: "concepts.tsv",
            line: line_no,
            msg: e.to_string(),
        })?;
        let bits = fields[3];
        if bits.chars().count() != space.len() {
            return Err(Error::Bitstring {
                concept: fields[0].into(),
                expected: space.len(),
                found: bits.chars().count(),
            });
        }
        let attributes = AttributeVector::parse_bitstring(bits).ok_or_else(|| Error::Malformed {
            what: "concepts.tsv",
            line: line_no,
            msg: format!("attribute bitstring may only contain 0 and 1: `{bits}`"),
        })?;
        instances.push(read_vector_file(&dir.join(fields[4]))?);
        concepts.push(Concept {
            id: fields[0].into(),
            category: fields[1].into(),
            attributes,
        });
        splits.push(split);
    }
    let render_map = if meta.render_map {
        Some(read_vector_file(&dir.join("render_map.danv"))?)
    } else {
        None
    };
    let world = World::new(space, concepts, instances, splits, render_map, meta.noise_std)?;
    if world.concepts.len() != meta.n_concepts || world.n_attributes() != meta.n_attributes {
        return Err(Error::Parameter(format!(
            "world.json declares {} concepts and {} attributes; files contain {} and {}",
            meta.n_concepts,
            meta.n_attributes,
            world.concepts.len(),
            world.n_attributes()
        )));
    }
    Ok(world)
}

/// Decoded checkpoint contents before they are bound to a model type.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub dtype: DType,
    pub dims: Vec<u32>,
    pub seed: u64,
    /// Training configuration echo (JSON text).
    pub config: String,
    /// Block name and its vector-file bytes.
    pub blocks: Vec<(String, Vec<u8>)>,
}

impl Checkpoint {
    pub fn from_params<T: Scalar, P: Parameters<T>>(params: &P, seed: u64, config: String) -> Self {
        Checkpoint {
            kind: params.kind(),
            dtype: T::DTYPE,
            dims: params.dims(),
            seed,
            config,
            blocks: params
                .blocks()
                .into_iter()
                .map(|(name, m)| (name.to_string(), encode_matrix(m)))
                .collect(),
        }
    }

    pub fn from_trained<T: Scalar>(model: &Trained<T>, seed: u64, config: String) -> Self {
        match model {
            Trained::Dan(p) => Self::from_params(p, seed, config),
            Trained::Ablation(p) => Self::from_params(p, seed, config),
            Trained::Classifier(p) => Self::from_params(p, seed, config),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(self.dtype as u8);
        out.extend_from_slice(&len_u16(self.dims.len(), "dims")?.to_le_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.seed.to_le_bytes());
        let config = self.config.as_bytes();
        let n = u32::try_from(config.len()).map_err(|_| Error::Parameter("config echo too long".into()))?;
        out.extend_from_slice(&n.to_le_bytes());
        out.extend_from_slice(config);
        out.extend_from_slice(&len_u16(self.blocks.len(), "blocks")?.to_le_bytes());
        for (name, bytes) in &self.blocks {
            out.extend_from_slice(&len_u16(name.len(), "block name")?.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(bytes);
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        check_magic(r.array()?, CHECKPOINT_MAGIC)?;
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let tag = r.u8()?;
        let kind = ModelKind::from_tag(tag).ok_or_else(|| Error::Parameter(format!("unknown model kind tag {tag}")))?;
        let dtype = dtype_tag(r.u8()?)?;
        let n_dims = r.u16()? as usize;
        let dims = (0..n_dims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let n = r.u32()? as usize;
        let config = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|e| Error::Parameter(format!("config echo is not UTF-8: {e}")))?;
        let n_blocks = r.u16()? as usize;
        let mut blocks = Vec::with_capacity(n_blocks);
        for _ in 0..n_blocks {
            let n = r.u16()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|e| Error::Parameter(format!("block name is not UTF-8: {e}")))?;
            let len = usize::try_from(r.u64()?).map_err(|_| Error::Parameter("block too large".into()))?;
            blocks.push((name, r.take(len)?.to_vec()));
        }
        r.finish()?;
        Ok(Checkpoint {
            kind,
            dtype,
            dims,
            seed,
            config,
            blocks,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read(path)?).map_err(|e| e.in_file(path))
    }

    fn dim(&self, i: usize) -> Result<usize> {
        self.dims
            .get(i)
            .map(|&d| d as usize)
            .ok_or_else(|| Error::Parameter(format!("checkpoint has {} dims, needs at least {}", self.dims.len(), i + 1)))
    }

    /// Overwrites every block of `params` from the checkpoint, by name and shape.
    fn fill<T: Scalar, P: Parameters<T>>(&self, mut params: P) -> Result<P> {
        let names: Vec<&str> = params.blocks().iter().map(|(n, _)| *n).collect();
        let stored: Vec<&str> = self.blocks.iter().map(|(n, _)| n.as_str()).collect();
        if names != stored {
            return Err(Error::Parameter(format!("checkpoint blocks {stored:?} do not match model blocks {names:?}")));
        }
        for ((_, dst), (_, bytes)) in params.blocks_mut().into_iter().zip(&self.blocks) {
            let m: Matrix<T> = decode_matrix(bytes)?;
            if m.shape() != dst.shape() {
                return Err(Error::Shape {
                    op: "checkpoint block",
                    left: dst.shape(),
                    right: m.shape(),
                });
            }
            *dst = m;
        }
        Ok(params)
    }

    /// Rebuilds the model, converting precision if `T` differs from the stored dtype.
    pub fn to_model<T: Scalar>(&self) -> Result<Trained<T>> {
        let mut rng = Rng::new(0);
        Ok(match self.kind {
            ModelKind::Dan => {
                let dims = DanDims {
                    input: self.dim(0)?,
                    attributes: self.dim(1)?,
                    hidden: self.dim(2)?,
                };
                let options = DanOptions {
                    attr_sigmoid: self.dim(3)? != 0,
                    bias: self.dim(4)? != 0,
                };
                Trained::Dan(self.fill(DanParams::init(dims, options, &mut rng)?)?)
            }
            ModelKind::Ablation => {
                let p = AblationParams::init(self.dim(0)?, self.dim(2)?, self.dim(1)?, &mut rng)?;
                Trained::Ablation(self.fill(p)?)
            }
            ModelKind::Classifier => {
                let p = AttrClassifierParams::init(self.dim(0)?, self.dim(2)?, self.dim(1)?, &mut rng)?;
                Trained::Classifier(self.fill(p)?)
            }
        })
    }
}

fn len_u16(n: usize, what: &str) -> Result<u16> {
    u16::try_from(n).map_err(|_| Error::Parameter(format!("too many {what}: {n}")))
}

/// What `load_visa` kept and dropped.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VisaReport {
    pub n_concepts: usize,
    pub n_attributes: usize,
    pub pruned_attributes: Vec<String>,
    /// In the attribute table but without a vector file.
    pub missing_vectors: Vec<String>,
    pub excluded: Vec<String>,
}

/// Reads an exclusion list: one concept id per line, `#` starts a comment.
pub fn read_exclusions(path: &Path) -> Result<HashSet<String>> {
    Ok(read_text(path)?
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// Loads a ViSA-style attribute table and per-concept instance vectors.
///
/// The table is TSV with header `concept<TAB>category<TAB><attr>...` and one
/// row of 0/1 values per concept; vectors live at `<vectors_dir>/<concept>.danv`.
/// Attributes held by none of the loaded concepts are dropped.
pub fn load_visa<T: Scalar>(
    attributes_tsv: &Path,
    vectors_dir: &Path,
    exclusions: &HashSet<String>,
    ratios: SplitRatios,
    rng: &mut Rng,
) -> Result<(World<T>, VisaReport)> {
    const WHAT: &str = "attribute table";
    let text = read_text(attributes_tsv)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Empty("attribute table"))?;
    let header: Vec<&str> = header.split('\t').collect();
    if header.len() < 3 {
        return Err(Error::Malformed {
            what: WHAT,
            line: 1,
            msg: "header needs concept, category and at least one attribute".into(),
        });
    }
    let names = &header[2..];
    let mut report = VisaReport::default();
    let mut rows: Vec<(Concept, Matrix<T>)> = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(Error::Malformed {
                what: WHAT,
                line: i + 1,
                msg: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        let id = fields[0].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Malformed {
                what: WHAT,
                line: i + 1,
                msg: format!("duplicate concept `{id}`"),
            });
        }
        let bits = fields[2..]
            .iter()
            .map(|f| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Malformed {
                    what: WHAT,
                    line: i + 1,
                    msg: format!("attribute value must be 0 or 1, found `{other}`"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        if exclusions.contains(&id) {
            report.excluded.push(id);
            continue;
        }
        check_id(&id)?;
        let path = vectors_dir.join(format!("{id}.danv"));
        if !path.exists() {
            log::warn!("skipping `{id}`: no vectors at {}", path.display());
            report.missing_vectors.push(id);
            continue;
        }
        let m = read_vector_file(&path)?;
        rows.push((
            Concept {
                id,
                category: fields[1].to_string(),
                attributes: AttributeVector::new(bits),
            },
            m,
        ));
    }
    if rows.is_empty() {
        return Err(Error::Empty("no concepts with vectors"));
    }
    let keep: Vec<usize> = (0..names.len())
        .filter(|&k| rows.iter().any(|(c, _)| c.attributes.get(k)))
        .collect();
    report.pruned_attributes = (0..names.len())
        .filter(|k| !keep.contains(k))
        .map(|k| names[k].to_string())
        .collect();
    let space = AttributeSpace::new(keep.iter().map(|&k| names[k].to_string()).collect())?;
    let (concepts, instances): (Vec<Concept>, Vec<Matrix<T>>) = rows
        .into_iter()
        .map(|(mut c, m)| {
            c.attributes = AttributeVector::new(keep.iter().map(|&k| c.attributes.get(k)).collect());
            (c, m)
        })
        .unzip();
    let splits = split_concepts(&concepts, ratios, rng)?;
    report.n_concepts = concepts.len();
    report.n_attributes = space.len();
    let world = World::new(space, concepts, instances, splits, None, None)?;
    Ok((world, report))
}
