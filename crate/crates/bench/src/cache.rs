//! On-disk cache of reference solutions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use ssp_core::problem::Problem;
use ssp_core::reference::{reference_solve_with, ReferenceOptions, ReferenceSolution};

/// Cache key: instance fingerprint plus the solver options.
pub fn cache_key(problem: &Problem, opts: &ReferenceOptions) -> Result<String> {
    let mut h = Sha256::new();
    h.update(problem.fingerprint().as_bytes());
    h.update(serde_json::to_vec(opts)?);
    Ok(hex::encode(h.finalize()))
}

pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReferenceCache { dir: dir.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Cached solution for `problem`, if one exists and matches its fingerprint.
    pub fn lookup(&self, problem: &Problem, opts: &ReferenceOptions) -> Result<Option<ReferenceSolution>> {
        let path = self.path_for(&cache_key(problem, opts)?);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let sol: ReferenceSolution = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok((sol.fingerprint == problem.fingerprint()).then_some(sol))
    }

    pub fn get_or_solve(&self, problem: &Problem, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
        if let Some(sol) = self.lookup(problem, opts)? {
            return Ok(sol);
        }
        let sol = reference_solve_with(problem, opts)?;
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.path_for(&cache_key(problem, opts)?);
        write_atomic(&path, serde_json::to_string_pretty(&sol)?.as_bytes())?;
        Ok(sol)
    }
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}
