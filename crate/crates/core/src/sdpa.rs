//! SDPA sparse-format (`.dat-s`) export and import.
//!
//! The interchange problem is `min c'x  s.t.  X = sum_i x_i F_i - F_0 >= 0`
//! over a block-diagonal `X`; negative block sizes denote diagonal blocks.
//! A [`ConicProblem`] maps onto it directly: every PSD block becomes a
//! matrix block (`F_0 = -C`), and the equality rows become `+-` pairs of
//! slots in one trailing diagonal block. Entries are written upper-triangle
//! with 1-based indices; values use the shortest round-trip decimal form,
//! so export -> import -> export reproduces the file byte for byte.
//!
//! Comment lines record the Hermitian embedding sides and the equality-row
//! count; external solvers ignore them, re-import restores the structure.

use std::io::{BufRead, Write};

use crate::conic::{BlockTerm, ConicProblem, ConicProblemBuilder};
use crate::{Error, Result};

/// Writes the problem in SDPA sparse format.
pub fn export_sdpa(problem: &ConicProblem, w: &mut impl Write) -> Result<()> {
    let m = problem.n_vars();
    let n_eq = problem.eq_rhs().len();
    let psd_blocks = problem.blocks().len();
    let n_blocks = psd_blocks + usize::from(n_eq > 0);

    writeln!(w, "* conic problem in SDPA sparse format")?;
    let herm: Vec<String> = problem
        .blocks()
        .iter()
        .map(|b| b.hermitian_side().unwrap_or(0).to_string())
        .collect();
    writeln!(w, "* hermitian-sides: {}", herm.join(" "))?;
    writeln!(w, "* eq-rows: {n_eq}")?;
    writeln!(w, "{m}")?;
    writeln!(w, "{n_blocks}")?;
    let mut sizes: Vec<String> = problem
        .blocks()
        .iter()
        .map(|b| b.side().to_string())
        .collect();
    if n_eq > 0 {
        sizes.push(format!("-{}", 2 * n_eq));
    }
    writeln!(w, "{}", sizes.join(" "))?;
    let obj: Vec<String> = problem.objective().iter().map(|v| v.to_string()).collect();
    writeln!(w, "{}", obj.join(" "))?;

    // Quintuples (matno, blkno, i, j, value), canonical order.
    let mut rows: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (bi, block) in problem.blocks().iter().enumerate() {
        let side = block.side();
        for &(entry, v) in block.constants() {
            let (r, c) = ((entry as usize) / side, (entry as usize) % side);
            // F_0 = -C; upper triangle.
            rows.push((0, bi + 1, c + 1, r + 1, -v));
        }
        for t in block.terms() {
            let (r, c) = ((t.entry as usize) / side, (t.entry as usize) % side);
            rows.push((t.var as usize + 1, bi + 1, c + 1, r + 1, t.coeff));
        }
    }
    let eq_block = psd_blocks + 1;
    for (e, (row, &rhs)) in problem
        .eq_rows()
        .iter()
        .zip(problem.eq_rhs())
        .enumerate()
    {
        let plus = 2 * e + 1;
        let minus = 2 * e + 2;
        if rhs != 0.0 {
            rows.push((0, eq_block, plus, plus, rhs));
            rows.push((0, eq_block, minus, minus, -rhs));
        }
        for &(v, coeff) in row {
            rows.push((v as usize + 1, eq_block, plus, plus, coeff));
            rows.push((v as usize + 1, eq_block, minus, minus, -coeff));
        }
    }
    rows.sort_by(|a, b| {
        (a.0, a.1, a.2, a.3)
            .cmp(&(b.0, b.1, b.2, b.3))
            .then(a.4.partial_cmp(&b.4).unwrap())
    });
    for (mat, blk, i, j, v) in rows {
        writeln!(w, "{mat} {blk} {i} {j} {v}")?;
    }
    Ok(())
}

struct Tokens {
    line_no: usize,
    buf: Vec<String>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Reads a problem from SDPA sparse format.
pub fn import_sdpa(r: &mut impl BufRead) -> Result<ConicProblem> {
    let mut lines = Vec::new();
    let mut herm_sides: Option<Vec<usize>> = None;
    let mut eq_rows_hint: Option<usize> = None;
    for (no, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with('*') || trimmed.starts_with('"') {
            if let Some(rest) = trimmed.strip_prefix("* hermitian-sides:") {
                herm_sides = Some(
                    rest.split_whitespace()
                        .map(|t| {
                            t.parse::<usize>()
                                .map_err(|_| parse_err(no + 1, "bad hermitian side"))
                        })
                        .collect::<Result<_>>()?,
                );
            }
            if let Some(rest) = trimmed.strip_prefix("* eq-rows:") {
                eq_rows_hint = Some(
                    rest.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(no + 1, "bad eq-rows count"))?,
                );
            }
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let toks: Vec<String> = trimmed
            .split(|ch: char| ch.is_whitespace() || "{}(),".contains(ch))
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string())
            .collect();
        if !toks.is_empty() {
            lines.push(Tokens {
                line_no: no + 1,
                buf: toks,
            });
        }
    }
    let mut it = lines.into_iter();
    let mut next = || it.next().ok_or_else(|| parse_err(0, "unexpected end of file"));

    let header = next()?;
    let m: usize = header.buf[0]
        .parse()
        .map_err(|_| parse_err(header.line_no, "bad variable count"))?;
    let blk_line = next()?;
    let n_blocks: usize = blk_line.buf[0]
        .parse()
        .map_err(|_| parse_err(blk_line.line_no, "bad block count"))?;
    if n_blocks == 0 {
        return Err(parse_err(blk_line.line_no, "no cone blocks"));
    }
    let sizes_line = next()?;
    if sizes_line.buf.len() < n_blocks {
        return Err(parse_err(sizes_line.line_no, "missing block sizes"));
    }
    let sizes: Vec<i64> = sizes_line.buf[..n_blocks]
        .iter()
        .map(|t| {
            t.parse::<i64>()
                .map_err(|_| parse_err(sizes_line.line_no, format!("bad block size '{t}'")))
        })
        .collect::<Result<_>>()?;

    // Objective tokens, possibly spanning lines.
    let mut objective = Vec::with_capacity(m);
    while objective.len() < m {
        let line = next()?;
        for t in &line.buf {
            if objective.len() == m {
                return Err(parse_err(line.line_no, "too many objective values"));
            }
            objective.push(
                t.parse::<f64>()
                    .map_err(|_| parse_err(line.line_no, format!("bad objective value '{t}'")))?,
            );
        }
    }

    // Entry quintuples, per block.
    struct RawEntry {
        mat: usize,
        i: usize,
        j: usize,
        value: f64,
    }
    let mut per_block: Vec<Vec<RawEntry>> = (0..n_blocks).map(|_| Vec::new()).collect();
    for line in it {
        if line.buf.len() != 5 {
            return Err(parse_err(
                line.line_no,
                format!("expected 5 fields, got {}", line.buf.len()),
            ));
        }
        let mat: usize = line.buf[0]
            .parse()
            .map_err(|_| parse_err(line.line_no, "bad matrix index"))?;
        let blk: usize = line.buf[1]
            .parse()
            .map_err(|_| parse_err(line.line_no, "bad block index"))?;
        let i: usize = line.buf[2]
            .parse()
            .map_err(|_| parse_err(line.line_no, "bad row index"))?;
        let j: usize = line.buf[3]
            .parse()
            .map_err(|_| parse_err(line.line_no, "bad column index"))?;
        let value: f64 = line.buf[4]
            .parse()
            .map_err(|_| parse_err(line.line_no, "bad value"))?;
        if mat > m {
            return Err(parse_err(line.line_no, "matrix index out of range"));
        }
        if blk == 0 || blk > n_blocks {
            return Err(parse_err(line.line_no, "block index out of range"));
        }
        let size = sizes[blk - 1].unsigned_abs() as usize;
        if i == 0 || j == 0 || i > size || j > size {
            return Err(parse_err(line.line_no, "entry index out of range"));
        }
        per_block[blk - 1].push(RawEntry { mat, i, j, value });
    }

    let mut builder = ConicProblemBuilder::new(m);
    for (v, &c) in objective.iter().enumerate() {
        if c != 0.0 {
            builder.set_objective(v, c);
        }
    }
    let mut psd_index = 0usize;
    for (bi, &size) in sizes.iter().enumerate() {
        let entries = &per_block[bi];
        if size > 0 {
            let side = size as usize;
            let blk = builder.add_block(side);
            if let Some(h) = herm_sides.as_ref().and_then(|v| v.get(psd_index)) {
                if *h > 0 {
                    if 2 * *h != side {
                        return Err(parse_err(0, "hermitian side does not match block size"));
                    }
                    builder.mark_hermitian(blk, *h);
                }
            }
            psd_index += 1;
            for e in entries {
                let (r, c) = (e.i.max(e.j) - 1, e.i.min(e.j) - 1);
                if e.mat == 0 {
                    builder.add_constant(blk, r, c, -e.value);
                } else {
                    builder.add_term(blk, r, c, e.mat - 1, e.value);
                }
            }
        } else {
            // Diagonal block: reconstruct equality rows from +- slot pairs;
            // unpaired slots become 1x1 PSD blocks.
            let d = (-size) as usize;
            let mut slot_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
            let mut slot_const = vec![0.0f64; d];
            for e in entries {
                if e.i != e.j {
                    return Err(parse_err(0, "off-diagonal entry in diagonal block"));
                }
                if e.mat == 0 {
                    slot_const[e.i - 1] += e.value;
                } else {
                    slot_terms[e.i - 1].push((e.mat - 1, e.value));
                }
            }
            for terms in slot_terms.iter_mut() {
                terms.sort_unstable_by_key(|t| t.0);
            }
            let expected_pairs = eq_rows_hint.unwrap_or(d / 2);
            let mut slot = 0usize;
            let mut pairs = 0usize;
            while slot < d {
                let negated = |a: &[(usize, f64)], b: &[(usize, f64)]| {
                    a.len() == b.len()
                        && a.iter().zip(b).all(|(x, y)| x.0 == y.0 && x.1 == -y.1)
                };
                if pairs < expected_pairs
                    && slot + 1 < d
                    && negated(&slot_terms[slot], &slot_terms[slot + 1])
                    && slot_const[slot] == -slot_const[slot + 1]
                    && !slot_terms[slot].is_empty()
                {
                    let row: Vec<(u32, f64)> = slot_terms[slot]
                        .iter()
                        .map(|&(v, c)| (v as u32, c))
                        .collect();
                    // F_0 carries +rhs on the + slot.
                    builder.add_equality(row, slot_const[slot]);
                    pairs += 1;
                    slot += 2;
                } else {
                    let blk = builder.add_block(1);
                    for &(v, c) in &slot_terms[slot] {
                        builder.add_term(blk, 0, 0, v, c);
                    }
                    if slot_const[slot] != 0.0 {
                        builder.add_constant(blk, 0, 0, -slot_const[slot]);
                    }
                    slot += 1;
                }
            }
        }
    }
    builder.build()
}

/// Canonical `(block, entry, var, coeff)` term list plus constants, used to
/// compare problems structurally.
pub fn canonical_triplets(problem: &ConicProblem) -> Vec<(usize, u32, u32, f64)> {
    let mut out = Vec::new();
    for (bi, block) in problem.blocks().iter().enumerate() {
        for &BlockTerm { entry, var, coeff } in block.terms() {
            out.push((bi, entry, var, coeff));
        }
    }
    out
}
