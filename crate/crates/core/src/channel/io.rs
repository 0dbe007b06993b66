//! Columnar text persistence for realizations.
//!
//! ```text
//! # uwblab channel realization
//! # params_hash: 3f2a...
//! # seed: 42
//! # cluster: 0,0.00000000e0,1.00000000e0,6.40000000e0
//! cluster_index,T_l_ns,tau_ns,alpha
//! 0,0.00000000e0,0.00000000e0,8.87065440e-2
//! ```
//!
//! Numbers carry 9 significant digits. Cluster lines hold arrival, energy and decay.

use std::io::{BufRead, Write};

use super::{ChannelRealization, Cluster, Tap};
use crate::error::{Error, Result};

const MAGIC: &str = "# uwblab channel realization";
const COLUMNS: &str = "cluster_index,T_l_ns,tau_ns,alpha";

fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

/// Write `real` in the columnar text format.
pub fn write_realization<W: Write>(mut w: W, real: &ChannelRealization) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "# params_hash: {}", real.params_hash)?;
    writeln!(w, "# seed: {}", real.seed)?;
    for (i, c) in real.clusters.iter().enumerate() {
        writeln!(w, "# cluster: {},{},{},{}", i, sci(c.arrival), sci(c.energy), sci(c.decay))?;
    }
    writeln!(w, "{COLUMNS}")?;
    for t in &real.taps {
        let c = &real.clusters[t.cluster];
        writeln!(w, "{},{},{},{}", t.cluster, sci(c.arrival), sci(t.delay), sci(t.amplitude))?;
    }
    Ok(())
}

fn num(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse { line, reason: format!("bad number `{s}`") })
}

fn idx(s: &str, line: usize) -> Result<usize> {
    s.trim().parse().map_err(|_| Error::Parse { line, reason: format!("bad index `{s}`") })
}

/// Read a realization written by [`write_realization`].
pub fn read_realization<R: BufRead>(r: R) -> Result<ChannelRealization> {
    let mut params_hash = None;
    let mut seed = None;
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut taps = Vec::new();
    let mut saw_magic = false;
    let mut saw_columns = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let ln = n + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if n == 0 {
            if text != MAGIC {
                return Err(Error::Parse { line: ln, reason: "missing realization header".into() });
            }
            saw_magic = true;
            continue;
        }
        if let Some(rest) = text.strip_prefix("# params_hash:") {
            params_hash = Some(rest.trim().to_string());
        } else if let Some(rest) = text.strip_prefix("# seed:") {
            seed = Some(rest.trim().parse::<u64>().map_err(|_| Error::Parse { line: ln, reason: "bad seed".into() })?);
        } else if let Some(rest) = text.strip_prefix("# cluster:") {
            let f: Vec<&str> = rest.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse { line: ln, reason: "cluster line needs 4 fields".into() });
            }
            if idx(f[0], ln)? != clusters.len() {
                return Err(Error::Parse { line: ln, reason: "cluster lines out of order".into() });
            }
            clusters.push(Cluster { arrival: num(f[1], ln)?, energy: num(f[2], ln)?, decay: num(f[3], ln)? });
        } else if text == COLUMNS {
            saw_columns = true;
        } else if text.starts_with('#') {
            continue;
        } else {
            if !saw_columns {
                return Err(Error::Parse { line: ln, reason: "data row before column header".into() });
            }
            let f: Vec<&str> = text.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse { line: ln, reason: "tap row needs 4 fields".into() });
            }
            let cluster = idx(f[0], ln)?;
            let c = clusters.get(cluster).ok_or_else(|| Error::Parse { line: ln, reason: "unknown cluster index".into() })?;
            if num(f[1], ln)? != c.arrival {
                return Err(Error::Parse { line: ln, reason: "T_l disagrees with cluster line".into() });
            }
            taps.push(Tap { cluster, delay: num(f[2], ln)?, amplitude: num(f[3], ln)? });
        }
    }
    if !saw_magic {
        return Err(Error::Parse { line: 0, reason: "empty input".into() });
    }
    Ok(ChannelRealization {
        clusters,
        taps,
        seed: seed.ok_or_else(|| Error::Parse { line: 0, reason: "missing seed".into() })?,
        params_hash: params_hash.ok_or_else(|| Error::Parse { line: 0, reason: "missing params_hash".into() })?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_realization, ChannelParams};

    #[test]
    fn round_trip_is_stable_at_printed_precision() {
        let p = ChannelParams::office_los();
        let r = generate_realization(&p, 77).unwrap();
        let mut a = Vec::new();
        write_realization(&mut a, &r).unwrap();
        let back = read_realization(a.as_slice()).unwrap();
        assert_eq!(back.seed, 77);
        assert_eq!(back.params_hash, r.params_hash);
        assert_eq!(back.taps.len(), r.taps.len());
        for (x, y) in back.taps.iter().zip(&r.taps) {
            assert!((x.amplitude - y.amplitude).abs() <= 5e-9 * y.amplitude.abs());
        }
        let mut b = Vec::new();
        write_realization(&mut b, &back).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_realization("hello\n".as_bytes()).is_err());
    }
}
