//! Dataset builds, on-disk layout and the `.flo` interchange format.
//!
//! Layout of a build directory:
//!
//! ```text
//! refs/NNN.png            clean reference frames (+ NNN.json disk sidecars)
//! pairs/NNNNN/ref.png     reference image of the pair
//! pairs/NNNNN/def.png     deformed image
//! pairs/NNNNN/gt.flo      ground-truth displacement
//! pairs/NNNNN/meta.json   pair record
//! manifest.json
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::DisplacementField;
use crate::field_gen::{random_field, FieldGenSpec};
use crate::image::{BitDepth, GrayImage};
use crate::interp::Interp;
use crate::seed::{self, stream};
use crate::speckle::{self, DiskSidecar, ScreeningThresholds, SpeckleParams};
use crate::warp::{add_noise, quantize, warp, NoiseModel};
use crate::{Error, Result};

/// Magic number opening every `.flo` file.
pub const FLOW_MAGIC: f32 = 202021.25;
pub const FLOW_HEADER_BYTES: usize = 12;

/// Serializes a field: magic, width and height as little-endian `i32`, then
/// interleaved `(u, v)` little-endian `f32`, row-major.
pub fn encode_flow(field: &DisplacementField) -> Result<Vec<u8>> {
    if let Some(i) = field.u().iter().zip(field.v()).position(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::FlowFormat {
            offset: (FLOW_HEADER_BYTES + 8 * i) as u64,
            reason: "non-finite displacement".into(),
        });
    }
    let (w, h) = field.dims();
    let mut out = Vec::with_capacity(FLOW_HEADER_BYTES + 8 * w * h);
    out.extend_from_slice(&FLOW_MAGIC.to_le_bytes());
    out.extend_from_slice(&(w as i32).to_le_bytes());
    out.extend_from_slice(&(h as i32).to_le_bytes());
    for (u, v) in field.u().iter().zip(field.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_flow(bytes: &[u8]) -> Result<DisplacementField> {
    let err = |offset: usize, reason: &str| Error::FlowFormat {
        offset: offset as u64,
        reason: reason.into(),
    };
    let word = |at: usize| -> Result<[u8; 4]> {
        bytes
            .get(at..at + 4)
            .map(|b| b.try_into().expect("4 bytes"))
            .ok_or_else(|| err(at, "truncated header"))
    };
    if f32::from_le_bytes(word(0)?) != FLOW_MAGIC {
        return Err(err(0, "bad magic"));
    }
    let w = i32::from_le_bytes(word(4)?);
    let h = i32::from_le_bytes(word(8)?);
    if w <= 0 || h <= 0 {
        return Err(err(4, "non-positive dimensions"));
    }
    let (w, h) = (w as usize, h as usize);
    let expected = FLOW_HEADER_BYTES + 8 * w * h;
    if bytes.len() < expected {
        return Err(err(bytes.len(), &format!("truncated data, expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(err(expected, "trailing bytes"));
    }
    let mut u = Vec::with_capacity(w * h);
    let mut v = Vec::with_capacity(w * h);
    for (k, chunk) in bytes[FLOW_HEADER_BYTES..].chunks_exact(4).enumerate() {
        let c = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !c.is_finite() {
            return Err(err(FLOW_HEADER_BYTES + 4 * k, "non-finite displacement"));
        }
        if k % 2 == 0 {
            u.push(c);
        } else {
            v.push(c);
        }
    }
    DisplacementField::from_components(w, h, u, v)
}

pub fn write_flow(field: &DisplacementField, path: &Path) -> Result<()> {
    let bytes = encode_flow(field)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<DisplacementField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetVersion {
    V1,
    V2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub version: DatasetVersion,
    pub n_references: usize,
    /// Training deformations per `(reference, region size)`.
    pub train_per_reference: usize,
    /// Held-out deformations per `(reference, region size)`.
    pub test_per_reference: usize,
    pub region_sizes: Vec<usize>,
    pub interp: Interp,
    pub noise: Option<NoiseModel>,
    pub master_seed: u64,
    pub frame_size: usize,
    pub bit_depth: BitDepth,
    pub screening: ScreeningThresholds,
    /// Candidate references tried per accepted frame before giving up.
    pub screening_budget_factor: usize,
}

impl DatasetConfig {
    /// 363 references, 100 training and 1 test deformation each, 8-px
    /// regions, bilinear nodes, noiseless.
    pub fn v1() -> Self {
        Self {
            version: DatasetVersion::V1,
            n_references: 363,
            train_per_reference: 100,
            test_per_reference: 1,
            region_sizes: vec![8],
            interp: Interp::Bilinear,
            noise: None,
            master_seed: 0,
            frame_size: 256,
            bit_depth: BitDepth::Eight,
            screening: ScreeningThresholds::default(),
            screening_budget_factor: 4,
        }
    }

    /// 363 references, six region sizes, 10 deformations per
    /// `(reference, size)` of which the last is held out, bicubic nodes,
    /// heteroscedastic noise.
    pub fn v2() -> Self {
        Self {
            version: DatasetVersion::V2,
            train_per_reference: 9,
            test_per_reference: 1,
            region_sizes: vec![4, 8, 16, 32, 64, 128],
            interp: Interp::Bicubic,
            noise: Some(NoiseModel::default()),
            ..Self::v1()
        }
    }

    pub fn for_version(version: DatasetVersion) -> Self {
        match version {
            DatasetVersion::V1 => Self::v1(),
            DatasetVersion::V2 => Self::v2(),
        }
    }

    pub fn deformations_per_reference(&self) -> usize {
        self.train_per_reference + self.test_per_reference
    }

    pub fn pair_count(&self) -> usize {
        self.n_references * self.region_sizes.len() * self.deformations_per_reference()
    }

    pub fn field_spec(&self, region_size: usize) -> FieldGenSpec {
        match self.version {
            DatasetVersion::V1 => FieldGenSpec {
                region_size,
                amplitude: 1.0,
                interp: self.interp,
                boundary_zero_width: region_size,
            },
            DatasetVersion::V2 => FieldGenSpec {
                interp: self.interp,
                ..FieldGenSpec::dataset_v2(region_size)
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_references == 0 || self.deformations_per_reference() == 0 || self.region_sizes.is_empty() {
            return Err(Error::param("dataset must contain at least one pair"));
        }
        if self.frame_size < 8 {
            return Err(Error::param("frame size must be >= 8"));
        }
        for &s in &self.region_sizes {
            self.field_spec(s).validate()?;
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// What one pair will be built from. Pure function of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPlan {
    pub index: usize,
    pub reference: usize,
    pub region_size: usize,
    pub deformation: usize,
    pub split: Split,
    pub seed: u64,
}

/// Enumerates every pair of a build without touching the disk.
pub fn plan_pairs(cfg: &DatasetConfig) -> Vec<PairPlan> {
    let per_ref = cfg.deformations_per_reference();
    let mut out = Vec::with_capacity(cfg.pair_count());
    for reference in 0..cfg.n_references {
        for &region_size in &cfg.region_sizes {
            for deformation in 0..per_ref {
                let index = out.len();
                out.push(PairPlan {
                    index,
                    reference,
                    region_size,
                    deformation,
                    split: if deformation < cfg.train_per_reference {
                        Split::Train
                    } else {
                        Split::Test
                    },
                    seed: seed::derive(cfg.master_seed, &[stream::PAIR, index as u64]),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub reference: String,
    pub deformed: String,
    pub flow: String,
    pub reference_frame: usize,
    pub seed: u64,
    pub region_size: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub index: usize,
    pub path: String,
    pub seed: u64,
    pub params: SpeckleParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: DatasetConfig,
    pub disks_per_pixel: f64,
    pub references: Vec<ReferenceRecord>,
    pub pairs: Vec<PairRecord>,
    pub train_count: usize,
    pub test_count: usize,
    /// SHA-256 over every written file, in manifest order.
    pub checksum: String,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    /// Checks that every referenced file exists under `root` and that the
    /// counts agree with the config.
    pub fn verify(&self, root: &Path) -> Result<()> {
        if self.pairs.len() != self.config.pair_count() {
            return Err(Error::param(format!(
                "manifest lists {} pairs, config implies {}",
                self.pairs.len(),
                self.config.pair_count()
            )));
        }
        let files = self
            .references
            .iter()
            .map(|r| &r.path)
            .chain(self.pairs.iter().flat_map(|p| [&p.reference, &p.deformed, &p.flow]));
        for f in files {
            let p = root.join(f);
            if !p.is_file() {
                return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(())
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// A screened reference frame and the disk set it was rendered from.
#[derive(Debug, Clone)]
pub struct Reference {
    pub image: GrayImage,
    pub sidecar: DiskSidecar,
}

/// Renders candidate frames with mixed settings until `n_references` pass
/// screening. Candidates are independent, so the accepted set is the same
/// however they are scheduled.
pub fn generate_references(cfg: &DatasetConfig) -> Result<Vec<Reference>> {
    let budget = cfg.n_references * cfg.screening_budget_factor.max(1);
    let batch = 16.max(rayon::current_num_threads());
    let mut accepted = Vec::with_capacity(cfg.n_references);
    let mut next = 0usize;
    while accepted.len() < cfg.n_references && next < budget {
        let end = (next + batch).min(budget);
        let rendered: Vec<Option<Reference>> = (next..end)
            .into_par_iter()
            .map(|candidate| -> Result<Option<Reference>> {
                let mut params = SpeckleParams::dataset_mixture(cfg.master_seed, candidate as u64);
                params.width = cfg.frame_size;
                params.height = cfg.frame_size;
                params.disk_count_mean *= (cfg.frame_size * cfg.frame_size) as f64 / (256.0 * 256.0);
                let seed = seed::derive(cfg.master_seed, &[stream::REFERENCE, candidate as u64]);
                let disks = speckle::sample_disks(&params, seed)?;
                let image = speckle::render_speckle(&disks, &params)?;
                Ok(speckle::screen_reference(&image, &cfg.screening).then(|| Reference {
                    image,
                    sidecar: DiskSidecar {
                        seed,
                        params,
                        disks: disks.disks,
                    },
                }))
            })
            .collect::<Result<_>>()?;
        accepted.extend(rendered.into_iter().flatten());
        next = end;
    }
    if accepted.len() < cfg.n_references {
        return Err(Error::ScreeningBudget {
            accepted: accepted.len(),
            wanted: cfg.n_references,
            budget,
        });
    }
    accepted.truncate(cfg.n_references);
    Ok(accepted)
}

/// Images and ground truth of one pair, before persistence.
#[derive(Debug, Clone)]
pub struct PairImages {
    pub reference: GrayImage,
    pub deformed: GrayImage,
    pub flow: DisplacementField,
}

/// Builds one pair: random field, bicubic warp, optional noise on both
/// images (independent realizations), quantization.
pub fn build_pair(cfg: &DatasetConfig, plan: &PairPlan, reference: &GrayImage) -> Result<PairImages> {
    let n = cfg.frame_size;
    let flow = random_field(&cfg.field_spec(plan.region_size), n, n, plan.seed)?;
    let deformed = warp(reference, &flow, Interp::Bicubic)?;
    let (reference, deformed) = match &cfg.noise {
        Some(model) => (
            add_noise(reference, model, seed::derive(plan.seed, &[stream::NOISE, 0]))?,
            add_noise(&deformed, model, seed::derive(plan.seed, &[stream::NOISE, 1]))?,
        ),
        None => (reference.clone(), deformed),
    };
    Ok(PairImages {
        reference: quantize(&reference, BitDepth::Eight),
        deformed: quantize(&deformed, BitDepth::Eight),
        flow,
    })
}

fn pair_dir(index: usize) -> String {
    format!("pairs/{index:05}")
}

fn reference_path(index: usize) -> String {
    format!("refs/{index:03}.png")
}

fn write_pair(cfg: &DatasetConfig, out_dir: &Path, plan: &PairPlan, refs: &[Reference]) -> Result<PairRecord> {
    let images = build_pair(cfg, plan, &refs[plan.reference].image)?;
    let dir = pair_dir(plan.index);
    create_dir(&out_dir.join(&dir))?;
    let record = PairRecord {
        index: plan.index,
        reference: format!("{dir}/ref.png"),
        deformed: format!("{dir}/def.png"),
        flow: format!("{dir}/gt.flo"),
        reference_frame: plan.reference,
        seed: plan.seed,
        region_size: plan.region_size,
        split: plan.split,
    };
    images.reference.save_png(&out_dir.join(&record.reference), cfg.bit_depth)?;
    images.deformed.save_png(&out_dir.join(&record.deformed), cfg.bit_depth)?;
    write_flow(&images.flow, &out_dir.join(&record.flow))?;
    let meta = out_dir.join(&dir).join("meta.json");
    fs::write(&meta, serde_json::to_vec_pretty(&record)?).map_err(|e| Error::io(&meta, e))?;
    Ok(record)
}

fn hash_files(root: &Path, files: impl Iterator<Item = String>) -> Result<String> {
    let mut hasher = Sha256::new();
    for f in files {
        let p = root.join(&f);
        let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        hasher.update(f.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Runs the whole pipeline and writes the build under `out_dir`.
pub fn build_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    create_dir(&out_dir.join("refs"))?;
    let refs = generate_references(cfg)?;
    let references: Vec<ReferenceRecord> = refs
        .iter()
        .enumerate()
        .map(|(i, r)| -> Result<ReferenceRecord> {
            let path = reference_path(i);
            r.image.save_png(&out_dir.join(&path), cfg.bit_depth)?;
            r.sidecar.save(&out_dir.join(format!("refs/{i:03}.json")))?;
            Ok(ReferenceRecord {
                index: i,
                path,
                seed: r.sidecar.seed,
                params: r.sidecar.params.clone(),
            })
        })
        .collect::<Result<_>>()?;

    let plans = plan_pairs(cfg);
    let pairs: Vec<PairRecord> = plans
        .par_iter()
        .map(|plan| {
            write_pair(cfg, out_dir, plan, &refs).map_err(|e| Error::Pair {
                index: plan.index,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let files = references
        .iter()
        .map(|r| r.path.clone())
        .chain(pairs.iter().flat_map(|p| [p.reference.clone(), p.deformed.clone(), p.flow.clone()]));
    let checksum = hash_files(out_dir, files)?;
    let train_count = pairs.iter().filter(|p| p.split == Split::Train).count();
    let manifest = Manifest {
        config: cfg.clone(),
        disks_per_pixel: refs
            .first()
            .map(|r| r.sidecar.params.disks_per_pixel())
            .unwrap_or_default(),
        references,
        test_count: pairs.len() - train_count,
        train_count,
        pairs,
        checksum,
    };
    let path = out_dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&serde_json::to_vec_pretty(&manifest)?)
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn pair_root(out_dir: &Path, index: usize) -> PathBuf {
    out_dir.join(pair_dir(index))
}
