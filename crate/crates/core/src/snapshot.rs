//! Binary wavefunction snapshots.
//!
//! Layout, little endian: `b"TSCP"`, version `u32`, point count `u64`,
//! `dx` as `f64`, 8 zero bytes, then `(re, im)` `f64` pairs.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::wavefn::{Representation, WaveFn};

pub const MAGIC: [u8; 4] = *b"TSCP";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub dx: f64,
    pub amps: Vec<Complex64>,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// The header has no origin, so the caller supplies `x_min`.
    pub fn into_wavefn(self, x_min: f64) -> Result<WaveFn> {
        let grid = Grid1D::new(x_min, x_min + self.dx * self.amps.len() as f64, self.amps.len())?;
        WaveFn::from_amplitudes(&grid, self.amps)
    }
}

pub fn write_snapshot<W: Write>(mut w: W, psi: &WaveFn) -> Result<()> {
    if psi.representation() != Representation::Position {
        return Err(Error::Representation("momentum"));
    }
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(psi.amps().len() as u64).to_le_bytes());
    header[16..24].copy_from_slice(&psi.grid().dx().to_le_bytes());
    w.write_all(&header)?;
    let mut body = Vec::with_capacity(16 * psi.amps().len());
    for a in psi.amps() {
        body.extend_from_slice(&a.re.to_le_bytes());
        body.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<Snapshot> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[0..4] != MAGIC {
        return Err(Error::Io("not a snapshot (bad magic)".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Io(format!("unsupported snapshot version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let dx = f64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    if header[24..32].iter().any(|&b| b != 0) {
        return Err(Error::Io("reserved header bytes are nonzero".into()));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(Error::Io(format!("bad dx {dx}")));
    }
    let n = usize::try_from(n).map_err(|_| Error::Io("point count overflows".into()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 16 * n {
        return Err(Error::Io(format!("expected {} payload bytes, found {}", 16 * n, body.len())));
    }
    let amps = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..16].try_into().expect("8 bytes")),
            )
        })
        .collect();
    Ok(Snapshot { dx, amps })
}

pub fn save(path: &Path, psi: &WaveFn) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_snapshot(&mut w, psi)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Snapshot> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::wavefn::gaussian_packet;

    #[test]
    fn header_layout() {
        let g = make_grid(-8.0, 8.0, 16).unwrap();
        let psi = WaveFn::from_fn(&g, |x| Complex64::new((-x * x).exp(), 0.5 * x)).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &psi).unwrap();
        assert_eq!(buf.len(), 32 + 16 * 16);
        assert_eq!(&buf[0..4], b"TSCP");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 16);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 1.0);
        assert!(buf[24..32].iter().all(|&b| b == 0));
        let re = f64::from_le_bytes(buf[32..40].try_into().unwrap());
        assert_eq!(re, psi.amps()[0].re);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let g = make_grid(-3.0, 5.0, 64).unwrap();
        let psi = gaussian_packet(&g, 1.0, -2.0, 0.7).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &psi).unwrap();
        let back = read_snapshot(&buf[..]).unwrap().into_wavefn(-3.0).unwrap();
        assert_eq!(back.amps(), psi.amps());
        assert_eq!(back.grid(), psi.grid());

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        save(&p, &psi).unwrap();
        assert_eq!(load(&p).unwrap().amps, psi.amps());
    }

    #[test]
    fn rejects_corruption() {
        let g = make_grid(-9.0, 11.0, 64).unwrap();
        let psi = gaussian_packet(&g, 1.0, 0.0, 1.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &psi).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_snapshot(&bad[..]).is_err());
        let mut bad = buf.clone();
        bad[30] = 1;
        assert!(read_snapshot(&bad[..]).is_err());
        assert!(read_snapshot(&buf[..buf.len() - 1]).is_err());
        assert!(read_snapshot(&buf[..10]).is_err());
    }
}
