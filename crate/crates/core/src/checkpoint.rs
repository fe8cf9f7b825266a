//! Binary state snapshots.
//!
//! Layout, all little-endian: magic `CHNS1`; `N`, `K`, `step` as `u64`; `t`
//! as `f64`; `L` as `f64`, `dealias_pad` as `u64`, then `nu1 nu2 kappa c1 c2`
//! as `f64`; then the packed half-spectrum coefficients of `u_x`, `u_y`,
//! `phi`, each as `(re, im)` `f64` pairs. Reading back is bit-exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::integrator::SystemState;
use crate::spectral::{GridSpec, PhysicsParams, SpectralField, VectorField, VelocityField};

pub const MAGIC: &[u8; 5] = b"CHNS1";

/// Contents of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: SystemState,
    pub params: PhysicsParams,
    /// Number of noise modes of the run that wrote it.
    pub noise_modes: u64,
}

pub fn write_checkpoint<W: Write>(
    out: &mut W,
    state: &SystemState,
    params: &PhysicsParams,
    noise_modes: u64,
) -> Result<()> {
    let g = state.grid();
    let mut buf = Vec::with_capacity(96 + 48 * g.len());
    buf.extend_from_slice(MAGIC);
    for v in [g.n() as u64, noise_modes, state.step] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&state.t.to_le_bytes());
    buf.extend_from_slice(&g.length().to_le_bytes());
    buf.extend_from_slice(&(g.pad() as u64).to_le_bytes());
    for v in [params.nu1, params.nu2, params.kappa, params.c1, params.c2] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for field in [state.u.x(), state.u.y(), &state.phi] {
        for c in field.coeffs() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut cur = Cursor { data: &data, pos: 0 };
    if cur.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a CHNS1 checkpoint".into()));
    }
    let n = cur.u64("N")?;
    let noise_modes = cur.u64("K")?;
    let step = cur.u64("step")?;
    let t = cur.f64("t")?;
    let length = cur.f64("L")?;
    let pad = cur.u64("dealias_pad")?;
    let grid = GridSpec::new(n as usize, length, pad as usize)
        .map_err(|e| Error::Checkpoint(format!("invalid grid block: {e}")))?;
    let mut p = [0.0; 5];
    for (v, name) in p.iter_mut().zip(["nu1", "nu2", "kappa", "c1", "c2"]) {
        *v = cur.f64(name)?;
    }
    let params = PhysicsParams {
        nu1: p[0],
        nu2: p[1],
        kappa: p[2],
        c1: p[3],
        c2: p[4],
    };
    let mut fields = Vec::with_capacity(3);
    for name in ["u_x", "u_y", "phi"] {
        let mut coeffs = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = cur.f64(name)?;
            let im = cur.f64(name)?;
            coeffs.push(Complex64::new(re, im));
        }
        fields.push(SpectralField::from_raw(grid, coeffs)?);
    }
    if cur.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after coefficient data",
            data.len() - cur.pos
        )));
    }
    let phi = fields.pop().expect("three fields");
    let y = fields.pop().expect("three fields");
    let x = fields.pop().expect("three fields");
    let state = SystemState {
        u: VelocityField::from_vector_unchecked(VectorField { x, y }),
        phi,
        t,
        step,
    };
    Ok(Checkpoint {
        state,
        params,
        noise_modes,
    })
}

/// Writes via a temporary file and rename, so readers never see a partial file.
pub fn save(path: &Path, state: &SystemState, params: &PhysicsParams, noise_modes: u64) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        write_checkpoint(&mut f, state, params, noise_modes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut f = fs::File::open(path)?;
    read_checkpoint(&mut f).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// `ckpt_<step>.chns` with the step zero-padded to 12 digits.
pub fn file_name(step: u64) -> String {
    format!("ckpt_{step:012}.chns")
}
