//! Text checkpoint:
//!
//! ```text
//! lossprio-mlp 1
//! widths 32 128 128 10
//! params 21514
//! <one f64 per line, shortest round-trip decimal>
//! ```

use std::io::{BufRead, Write};

use super::Mlp;
use crate::error::{Error, Result};

const MAGIC: &str = "lossprio-mlp 1";

pub fn write_checkpoint<W: Write>(model: &Mlp, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    let widths: Vec<String> = model.widths().iter().map(usize::to_string).collect();
    writeln!(out, "widths {}", widths.join(" "))?;
    writeln!(out, "params {}", model.params().len())?;
    for p in model.params() {
        writeln!(out, "{p:?}")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Mlp> {
    let bad = |reason: String| Error::format("checkpoint", reason);
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| bad(format!("missing {what}")))
    };
    let magic = next("header")?;
    if magic.trim() != MAGIC {
        return Err(bad(format!("unexpected header `{magic}`")));
    }
    let widths_line = next("widths")?;
    let widths = widths_line
        .strip_prefix("widths ")
        .ok_or_else(|| bad("missing widths line".into()))?
        .split_whitespace()
        .map(|w| w.parse::<usize>().map_err(|e| bad(format!("width `{w}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let count_line = next("params")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .ok_or_else(|| bad("missing params line".into()))?
        .trim()
        .parse()
        .map_err(|e| bad(format!("param count: {e}")))?;
    let mut params = Vec::with_capacity(count);
    for i in 0..count {
        let l = next("parameter")?;
        params.push(
            l.trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("parameter {i}: {e}")))?,
        );
    }
    Mlp::from_params(&widths, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bit_exact(seed in any::<u64>(), hidden in 1usize..12) {
            let m = Mlp::new(&[3, hidden, 4], seed).unwrap();
            let mut buf = Vec::new();
            write_checkpoint(&m, &mut buf).unwrap();
            let back = read_checkpoint(buf.as_slice()).unwrap();
            prop_assert_eq!(back.widths(), m.widths());
            let bits = |m: &Mlp| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&m));
        }
    }

    #[test]
    fn rejects_truncated() {
        let m = Mlp::new(&[2, 3], 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(read_checkpoint(cut.as_bytes()).is_err());
        assert!(read_checkpoint("nonsense\n".as_bytes()).is_err());
    }
}
