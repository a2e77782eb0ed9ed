//! Binary snapshots of density fields and `|ρ|` CSV export.
//!
//! Layout, all little-endian: the 6-byte magic `NMQBM1`, `N` as u64, then
//! `L`, `τ`, `R_Ω`, `D` as f64, then `N²` row-major `(re, im)` f64 pairs.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid2D, C64};

pub const MAGIC: &[u8; 6] = b"NMQBM1";

/// Parameters stored alongside the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotMeta {
    pub r_omega: f64,
    pub d: f64,
}

pub fn write_snapshot<W: Write>(mut w: W, f: &DensityField, meta: SnapshotMeta) -> Result<()> {
    let g = f.grid();
    w.write_all(MAGIC)?;
    w.write_all(&(g.n() as u64).to_le_bytes())?;
    for v in [g.half_width(), f.tau, meta.r_omega, meta.d] {
        w.write_all(&v.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(16 * f.values().len());
    for v in f.values() {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(DensityField, SnapshotMeta)> {
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a snapshot file (bad magic)".into()));
    }
    let mut nb = [0u8; 8];
    r.read_exact(&mut nb)?;
    let n = u64::from_le_bytes(nb);
    if n > 1 << 16 {
        return Err(Error::Format(format!("implausible grid size {n}")));
    }
    let half_width = read_f64(&mut r)?;
    let tau = read_f64(&mut r)?;
    let r_omega = read_f64(&mut r)?;
    let d = read_f64(&mut r)?;
    let grid = Grid2D::new(n as usize, half_width)?;
    let count = grid.len();
    let mut raw = vec![0u8; 16 * count];
    r.read_exact(&mut raw)?;
    let values = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            C64::new(re, im)
        })
        .collect();
    let field = DensityField::from_values(&grid, values, tau)?;
    Ok((field, SnapshotMeta { r_omega, d }))
}

pub fn save_snapshot(path: &Path, f: &DensityField, meta: SnapshotMeta) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_snapshot(std::io::BufWriter::new(file), f, meta)
}

pub fn load_snapshot(path: &Path) -> Result<(DensityField, SnapshotMeta)> {
    read_snapshot(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// `ξ, η, |ρ|` rows for plotting.
pub fn abs_csv(f: &DensityField) -> String {
    let x = f.grid().coords();
    let n = x.len();
    let mut s = String::with_capacity(32 * n * n);
    s.push_str("xi,eta,abs_rho\n");
    for i in 0..n {
        for j in 0..n {
            let _ = writeln!(s, "{},{},{:e}", x[i], x[j], f.get(i, j).norm());
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cat_state, make_grid};

    #[test]
    fn round_trip_is_bitwise() {
        let g = make_grid(65, 8.0).unwrap();
        let mut f = build_cat_state(&g, 4.0, 0.5).unwrap();
        f.tau = 0.125;
        let meta = SnapshotMeta { r_omega: 0.3, d: 3.93 };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, meta).unwrap();
        assert_eq!(buf.len(), 6 + 8 + 32 + 16 * 65 * 65);
        let (back, m) = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back.tau, 0.125);
        assert_eq!(back.grid().half_width(), 8.0);
        assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.re.to_bits() == b.re.to_bits()
            && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn header_layout() {
        let g = make_grid(33, 4.0).unwrap();
        let f = DensityField::zeros(&g);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &f, SnapshotMeta { r_omega: 0.0, d: 1.0 }).unwrap();
        assert_eq!(&buf[..6], b"NMQBM1");
        assert_eq!(u64::from_le_bytes(buf[6..14].try_into().unwrap()), 33);
        assert_eq!(f64::from_le_bytes(buf[14..22].try_into().unwrap()), 4.0);
        assert_eq!(f64::from_le_bytes(buf[38..46].try_into().unwrap()), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_snapshot(&b"NOTSNP"[..]).is_err());
        let g = make_grid(33, 4.0).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &DensityField::zeros(&g), SnapshotMeta { r_omega: 0.0, d: 1.0 }).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(read_snapshot(buf.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(33, 4.0).unwrap();
        let f = build_cat_state(&g, 2.0, 0.3).unwrap();
        let p = dir.path().join("s.bin");
        save_snapshot(&p, &f, SnapshotMeta { r_omega: 0.1, d: 1.0 }).unwrap();
        let (back, _) = load_snapshot(&p).unwrap();
        assert_eq!(back, f);
        let csv = abs_csv(&f);
        assert_eq!(csv.lines().count(), 1 + 33 * 33);
        assert!(csv.starts_with("xi,eta,abs_rho\n-4,-4,"));
    }
}
