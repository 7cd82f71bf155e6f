use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed::{delay_embed, EmbeddingSpec};
use crate::error::{Error, FormatError, Result};
use crate::integrate::Trajectory;
use crate::io::{atomic_write, decode_container, encode_container, read_file};

const MAGIC: &[u8; 8] = b"IDODESET";
const VERSION: u32 = 1;

/// Trajectories of one system sharing `dt`, state width and representation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub system: String,
    pub dt: f64,
    /// Row width of every member (embedded width when `embedding` is set).
    pub width: usize,
    pub param_labels: Vec<String>,
    pub embedding: Option<EmbeddingSpec>,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(system: &str, dt: f64, width: usize, param_labels: Vec<String>) -> Self {
        Self { system: system.to_string(), dt, width, param_labels, embedding: None, trajectories: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn param_dim(&self) -> usize {
        self.param_labels.len()
    }

    pub fn total_rows(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Adds a member after checking it matches the set.
    pub fn push(&mut self, traj: Trajectory) -> Result<()> {
        self.check_member(&traj)?;
        self.trajectories.push(traj);
        Ok(())
    }

    fn check_member(&self, t: &Trajectory) -> Result<()> {
        if t.width() != self.width {
            return Err(Error::shape(format!("trajectory width {} does not match set width {}", t.width(), self.width)));
        }
        if t.params.len() != self.param_dim() {
            return Err(Error::shape(format!(
                "trajectory has {} parameters, set expects {}",
                t.params.len(),
                self.param_dim()
            )));
        }
        if t.dt != self.dt {
            return Err(Error::shape(format!("trajectory dt {} does not match set dt {}", t.dt, self.dt)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.trajectories.iter().try_for_each(|t| self.check_member(t))
    }

    /// Delay-embeds every member.
    pub fn embed(&self, spec: &EmbeddingSpec) -> Result<TrajectorySet> {
        if self.embedding.is_some() {
            return Err(Error::arg("set is already embedded"));
        }
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| delay_embed(t, spec).map(|e| e.trajectory))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectorySet {
            system: self.system.clone(),
            dt: self.dt,
            width: spec.embedded_dim(),
            param_labels: self.param_labels.clone(),
            embedding: Some(spec.clone()),
            trajectories,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let header = Header {
            system: self.system.clone(),
            dt: self.dt,
            width: self.width,
            param_labels: self.param_labels.clone(),
            embedding: self.embedding.clone(),
            trajectories: self
                .trajectories
                .iter()
                .map(|t| MemberHeader { params: t.params.clone(), t0: t.t0, rows: t.len() })
                .collect(),
        };
        let mut payload = Vec::with_capacity(self.total_rows() * self.width);
        for t in &self.trajectories {
            payload.extend(t.states.iter());
        }
        Ok(encode_container(MAGIC, VERSION, &serde_json::to_vec(&header)?, &payload))
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self> {
        let mut parsed: Option<Header> = None;
        let container = decode_container(path, bytes, MAGIC, VERSION, |h| {
            let header: Header = serde_json::from_slice(h).map_err(|e| FormatError::Header(e.to_string()))?;
            let floats = header.trajectories.iter().map(|m| m.rows).sum::<usize>() * header.width;
            parsed = Some(header);
            Ok(floats)
        })?;
        let header = parsed.expect("header parsed");
        let mut offset = 0;
        let mut trajectories = Vec::with_capacity(header.trajectories.len());
        for m in &header.trajectories {
            let n = m.rows * header.width;
            let states = Array2::from_shape_vec((m.rows, header.width), container.payload[offset..offset + n].to_vec())
                .map_err(|e| Error::format(path, FormatError::Shape(e.to_string())))?;
            offset += n;
            trajectories.push(Trajectory {
                system: header.system.clone(),
                params: m.params.clone(),
                t0: m.t0,
                dt: header.dt,
                states,
            });
        }
        let set = TrajectorySet {
            system: header.system,
            dt: header.dt,
            width: header.width,
            param_labels: header.param_labels,
            embedding: header.embedding,
            trajectories,
        };
        set.validate().map_err(|e| Error::format(path, FormatError::Shape(e.to_string())))?;
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    system: String,
    dt: f64,
    width: usize,
    param_labels: Vec<String>,
    embedding: Option<EmbeddingSpec>,
    trajectories: Vec<MemberHeader>,
}

#[derive(Serialize, Deserialize)]
struct MemberHeader {
    params: Vec<f64>,
    t0: f64,
    rows: usize,
}

pub fn save_trajectories(set: &TrajectorySet, path: &Path) -> Result<()> {
    atomic_write(path, &set.to_bytes()?)
}

pub fn load_trajectories(path: &Path) -> Result<TrajectorySet> {
    TrajectorySet::from_bytes(path, &read_file(path)?)
}
