//! Plain-text file formats: network checkpoints with bit-exact values,
//! grid-game trajectory dumps and payoff tables.

use std::fmt::Write as _;

use prosocial_core::markov_training::TrajectoryStep;
use prosocial_core::matrix_games::BimatrixGame;
use prosocial_core::neural::NamedArray;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &str = "prosocial-checkpoint 1";

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// One array per pair of lines: `name dim0 dim1 ...`, then the values as
/// space-separated hexadecimal IEEE-754 bit patterns.
pub fn write_checkpoint(arrays: &[NamedArray]) -> String {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "arrays {}", arrays.len()).unwrap();
    for a in arrays {
        write!(out, "{}", a.name).unwrap();
        for d in &a.shape {
            write!(out, " {d}").unwrap();
        }
        out.push('\n');
        let values: Vec<String> = a.values.iter().map(|v| format!("{:016x}", v.to_bits())).collect();
        writeln!(out, "{}", values.join(" ")).unwrap();
    }
    out
}

pub fn read_checkpoint(text: &str, path: &str) -> Result<Vec<NamedArray>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| lines.next().ok_or_else(|| parse_err(path, 0, format!("missing {what}")));
    let (n, magic) = next("header")?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(parse_err(path, n, "not a checkpoint file"));
    }
    let (n, count) = next("array count")?;
    let count: usize = count
        .strip_prefix("arrays ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| parse_err(path, n, "expected `arrays <count>`"))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, head) = next("array header")?;
        let mut parts = head.split_whitespace();
        let name = parts.next().ok_or_else(|| parse_err(path, n, "missing array name"))?.to_string();
        let shape = parts
            .map(|d| d.parse::<usize>().map_err(|_| parse_err(path, n, format!("bad dimension `{d}`"))))
            .collect::<Result<Vec<_>>>()?;
        let (n, body) = next("array values")?;
        let values = body
            .split_whitespace()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(f64::from_bits)
                    .map_err(|_| parse_err(path, n, format!("bad value `{h}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(parse_err(path, n, format!("{name}: {} values for shape {shape:?}", values.len())));
        }
        out.push(NamedArray { name, shape, values });
    }
    Ok(out)
}

/// One line per step: `state_hash a1 a2 r1 r2`, hash in hex.
pub fn write_trajectory(steps: &[TrajectoryStep]) -> String {
    let mut out = String::new();
    for s in steps {
        writeln!(
            out,
            "{:016x} {} {} {} {}",
            s.state_hash, s.actions[0], s.actions[1], s.rewards[0], s.rewards[1]
        )
        .unwrap();
    }
    out
}

pub fn read_trajectory(text: &str, path: &str) -> Result<Vec<TrajectoryStep>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |what: &str| parse_err(path, i + 1, format!("bad {what}"));
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 5 {
                return Err(parse_err(path, i + 1, "expected 5 fields"));
            }
            Ok(TrajectoryStep {
                state_hash: u64::from_str_radix(f[0], 16).map_err(|_| bad("state hash"))?,
                actions: [f[1].parse().map_err(|_| bad("action"))?, f[2].parse().map_err(|_| bad("action"))?],
                rewards: [f[3].parse().map_err(|_| bad("reward"))?, f[4].parse().map_err(|_| bad("reward"))?],
            })
        })
        .collect()
}

/// Payoff table: one row per line, cells separated by whitespace. A cell is
/// `r1,r2`; a table of single numbers is a symmetric game given by the row
/// player's payoffs. `#` starts a comment.
pub fn parse_matrix(text: &str, path: &str) -> Result<BimatrixGame> {
    let mut r1 = Vec::new();
    let mut r2 = Vec::new();
    let mut paired = None;
    let mut cols = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut row1 = Vec::new();
        let mut row2 = Vec::new();
        for cell in line.split_whitespace() {
            let nums = cell
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| parse_err(path, i + 1, format!("bad number in `{cell}`"))))
                .collect::<Result<Vec<_>>>()?;
            let is_pair = match nums.len() {
                1 => false,
                2 => true,
                _ => return Err(parse_err(path, i + 1, format!("cell `{cell}` must hold one or two numbers"))),
            };
            if *paired.get_or_insert(is_pair) != is_pair {
                return Err(parse_err(path, i + 1, "mixed single and paired cells"));
            }
            row1.push(nums[0]);
            row2.push(*nums.last().unwrap());
        }
        if *cols.get_or_insert(row1.len()) != row1.len() {
            return Err(parse_err(path, i + 1, "rows have different lengths"));
        }
        r1.push(row1);
        r2.push(row2);
    }
    if r1.is_empty() {
        return Err(parse_err(path, 0, "empty table"));
    }
    if paired == Some(true) {
        Ok(BimatrixGame::from_rows(&r1, &r2)?)
    } else {
        let n = r1.len();
        if cols != Some(n) {
            return Err(parse_err(path, 0, "a symmetric table must be square"));
        }
        Ok(BimatrixGame::symmetric(n, r1.concat())?)
    }
}

pub fn format_matrix(game: &BimatrixGame) -> String {
    let mut out = String::new();
    for i in 0..game.rows() {
        let cells: Vec<String> = (0..game.cols()).map(|j| format!("{},{}", game.r1(i, j), game.r2(i, j))).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let arrays = vec![
            NamedArray {
                name: "a.weight".into(),
                shape: vec![2, 2],
                values: vec![0.1, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0],
            },
            NamedArray {
                name: "b".into(),
                shape: vec![0],
                values: vec![],
            },
        ];
        let text = write_checkpoint(&arrays);
        let back = read_checkpoint(&text, "mem").unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in arrays.iter().zip(&back) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
        assert!(read_checkpoint("junk", "mem").is_err());
        let truncated = text.replace(&format!("{:016x}", (1.0f64 / 3.0).to_bits()), "");
        assert!(read_checkpoint(&truncated, "mem").is_err());
    }

    #[test]
    fn trajectory_round_trip() {
        let steps = vec![
            TrajectoryStep {
                state_hash: 0xdead_beef,
                actions: [1, 3],
                rewards: [0.5, -3.2],
            },
            TrajectoryStep {
                state_hash: u64::MAX,
                actions: [0, 0],
                rewards: [0.1 + 0.2, 0.0],
            },
        ];
        assert_eq!(read_trajectory(&write_trajectory(&steps), "mem").unwrap(), steps);
        assert!(read_trajectory("zz 1 2 3 4\n", "mem").is_err());
    }

    #[test]
    fn matrix_tables() {
        let sym = parse_matrix("# stag hunt\n2 -1\n1 1\n", "mem").unwrap();
        assert!(sym.is_symmetric());
        assert_eq!(sym.r2(0, 1), 1.0);
        let pairs = parse_matrix("2,2 -1,1\n1,-1 1,1\n", "mem").unwrap();
        assert_eq!(pairs, sym);
        assert_eq!(parse_matrix(&format_matrix(&pairs), "mem").unwrap(), pairs);
        assert!(parse_matrix("1 2\n3\n", "mem").is_err());
        assert!(parse_matrix("1,2 3\n", "mem").is_err());
        assert!(parse_matrix("1 2 3\n4 5 6\n", "mem").is_err());
        assert!(parse_matrix("", "mem").is_err());
    }
}
