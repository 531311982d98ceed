//! Readers and writers for the common benchmark text formats.
//!
//! * `.fjs` (Brandimarte / Hurink): header `num_jobs num_machines [avg_flex]`,
//!   then one line per job: `num_ops {num_alts {machine duration}*}*` with
//!   1-indexed machines.
//! * Taillard JSSP: `n m [seeds/bounds...]`, a block of `n` lines with `m`
//!   processing times, then `n` lines with `m` 1-indexed machine ids. Lines
//!   holding words (`Times`, `Machines`, column captions) are skipped.
//! * DMU: the same two-matrix layout without captions; machine ids may be 0-
//!   or 1-indexed.

use std::fmt::Write as _;

use super::{Alternative, Instance, Job, OperationSpec, Time};
use crate::error::{Error, Result};

/// Non-empty lines with their 1-based line numbers; accepts `\n` and `\r\n`.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_ints(line_no: usize, line: &str) -> Result<Vec<i64>> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<i64>()
                .map_err(|_| Error::parse(line_no, format!("expected an integer, found `{tok}`")))
        })
        .collect()
}

pub fn parse_fjs(text: &str) -> Result<Instance> {
    let mut lines = numbered_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() < 2 {
        return Err(Error::parse(hline, "header must be `num_jobs num_machines [avg_flex]`"));
    }
    let num_jobs: usize = head[0]
        .parse()
        .map_err(|_| Error::parse(hline, format!("bad job count `{}`", head[0])))?;
    let num_machines: usize = head[1]
        .parse()
        .map_err(|_| Error::parse(hline, format!("bad machine count `{}`", head[1])))?;
    if head.len() > 2 && head[2].parse::<f64>().is_err() {
        return Err(Error::parse(hline, format!("bad flexibility field `{}`", head[2])));
    }
    if num_jobs == 0 || num_machines == 0 {
        return Err(Error::parse(hline, "job and machine counts must be positive"));
    }

    let mut jobs = Vec::with_capacity(num_jobs);
    for j in 0..num_jobs {
        let (ln, line) = lines
            .next()
            .ok_or_else(|| Error::parse(hline + j + 1, format!("missing line for job {j}")))?;
        let toks = parse_ints(ln, line)?;
        let mut pos = 0usize;
        let mut take = |what: &str| -> Result<i64> {
            let v = toks
                .get(pos)
                .copied()
                .ok_or_else(|| Error::parse(ln, format!("line truncated while reading {what}")))?;
            pos += 1;
            Ok(v)
        };
        let n_ops = take("operation count")?;
        if n_ops <= 0 {
            return Err(Error::parse(ln, "job must have at least one operation"));
        }
        let mut operations = Vec::with_capacity(n_ops as usize);
        for _ in 0..n_ops {
            let n_alts = take("alternative count")?;
            if n_alts <= 0 {
                return Err(Error::parse(ln, "operation must have at least one machine"));
            }
            let mut alternatives = Vec::with_capacity(n_alts as usize);
            for _ in 0..n_alts {
                let machine = take("machine")?;
                let duration = take("duration")?;
                if machine < 1 || machine as usize > num_machines {
                    return Err(Error::parse(
                        ln,
                        format!("machine {machine} out of range 1..={num_machines}"),
                    ));
                }
                if duration < 1 {
                    return Err(Error::parse(ln, format!("duration {duration} must be >= 1")));
                }
                alternatives.push(Alternative {
                    machine: machine as usize - 1,
                    duration: duration as Time,
                });
            }
            operations.push(OperationSpec::new(alternatives));
        }
        if pos != toks.len() {
            return Err(Error::parse(ln, format!("{} unexpected trailing values", toks.len() - pos)));
        }
        jobs.push(Job { operations });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::parse(ln, "unexpected content after the last job"));
    }
    Instance::new(num_machines, jobs, "").map_err(|e| Error::parse(hline, e.to_string()))
}

pub fn write_fjs(instance: &Instance) -> String {
    let mut out = String::new();
    let flex = instance.flexibility();
    let flex = if flex.fract() == 0.0 {
        format!("{}", flex as u64)
    } else {
        format!("{flex:.2}")
    };
    let _ = writeln!(out, "{} {} {}", instance.num_jobs(), instance.num_machines(), flex);
    for job in instance.jobs() {
        let _ = write!(out, "{}", job.operations.len());
        for op in &job.operations {
            let _ = write!(out, "  {}", op.alternatives.len());
            for alt in &op.alternatives {
                let _ = write!(out, " {} {}", alt.machine + 1, alt.duration);
            }
        }
        out.push('\n');
    }
    out
}

/// Numeric rows of a two-matrix JSSP file: `(line, values)`, caption lines dropped.
fn numeric_rows(text: &str) -> Result<Vec<(usize, Vec<i64>)>> {
    numbered_lines(text)
        .filter(|(_, l)| !l.chars().any(|c| c.is_ascii_alphabetic()))
        .map(|(ln, l)| Ok((ln, parse_ints(ln, &l.replace(',', " "))?)))
        .collect()
}

fn parse_matrix_jssp(text: &str, one_indexed: Option<bool>) -> Result<Instance> {
    let rows = numeric_rows(text)?;
    let (hline, header) = rows.first().ok_or_else(|| Error::parse(1, "empty file"))?;
    if header.len() < 2 || header[0] <= 0 || header[1] <= 0 {
        return Err(Error::parse(*hline, "header must start with `num_jobs num_machines`"));
    }
    let (n, m) = (header[0] as usize, header[1] as usize);
    let body = &rows[1..];
    if body.len() != 2 * n {
        let line = body.last().map_or(*hline, |(l, _)| *l);
        return Err(Error::parse(
            line,
            format!("expected {} matrix rows ({n} times + {n} machines), found {}", 2 * n, body.len()),
        ));
    }
    for (ln, row) in body {
        if row.len() != m {
            return Err(Error::parse(*ln, format!("expected {m} values, found {}", row.len())));
        }
    }
    let (times, machines) = body.split_at(n);
    let zero_based = match one_indexed {
        Some(one) => !one,
        None => machines.iter().any(|(_, r)| r.contains(&0)),
    };
    let offset = if zero_based { 0 } else { 1 };
    let mut jobs = Vec::with_capacity(n);
    for ((tl, trow), (ml, mrow)) in times.iter().zip(machines) {
        let mut operations = Vec::with_capacity(m);
        for (&d, &mach) in trow.iter().zip(mrow) {
            if d < 1 {
                return Err(Error::parse(*tl, format!("duration {d} must be >= 1")));
            }
            let idx = mach - offset;
            if idx < 0 || idx as usize >= m {
                return Err(Error::parse(*ml, format!("machine {mach} out of range")));
            }
            operations.push(OperationSpec::new(vec![Alternative {
                machine: idx as usize,
                duration: d as Time,
            }]));
        }
        jobs.push(Job { operations });
    }
    Instance::new(m, jobs, "").map_err(|e| Error::parse(*hline, e.to_string()))
}

/// Taillard format (machines 1-indexed).
pub fn parse_taillard_jssp(text: &str) -> Result<Instance> {
    parse_matrix_jssp(text, Some(true))
}

/// DMU format: same matrices, machine indexing detected from the data.
pub fn parse_dmu(text: &str) -> Result<Instance> {
    parse_matrix_jssp(text, None)
}

/// Writes the Taillard layout. Every job must have exactly `num_machines`
/// single-machine operations.
pub fn write_taillard_jssp(instance: &Instance) -> Result<String> {
    let m = instance.num_machines();
    for (j, job) in instance.jobs().iter().enumerate() {
        if job.operations.len() != m || job.operations.iter().any(|o| o.alternatives.len() != 1) {
            return Err(Error::InvalidInstance(format!(
                "job {j} is not a {m}-operation single-machine route"
            )));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", instance.num_jobs(), m);
    out.push_str("Times\n");
    for job in instance.jobs() {
        let row: Vec<String> = job.operations.iter().map(|o| o.alternatives[0].duration.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out.push_str("Machines\n");
    for job in instance.jobs() {
        let row: Vec<String> = job
            .operations
            .iter()
            .map(|o| (o.alternatives[0].machine + 1).to_string())
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::instance_from_lists;

    #[test]
    fn fjs_toy_example() {
        let inst = parse_fjs("2 2\n2 2 1 3 2 5 1 1 4\n1 1 2 6\n").unwrap();
        let expected = instance_from_lists(2, &[&[&[(0, 3), (1, 5)], &[(0, 4)]], &[&[(1, 6)]]]).unwrap();
        assert_eq!(inst, expected);
    }

    #[test]
    fn fjs_accepts_crlf_and_extra_whitespace() {
        let inst = parse_fjs("2\t2   1\r\n\r\n 2  2 1 3 2 5   1 1 4 \r\n1 1 2 6\r\n").unwrap();
        assert_eq!(inst.num_operations(), 3);
    }

    #[test]
    fn fjs_errors_carry_line_numbers() {
        match parse_fjs("2 2\n2 2 1 3 2 5 1 1\n1 1 2 6\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_fjs("2 2\n1 1 1 3\n1 1 3 6\n") {
            Err(Error::Parse { line: 3, msg }) => assert!(msg.contains("out of range")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_fjs("x 2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_fjs("2 2\n1 1 1 3\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_fjs(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn fjs_round_trip() {
        let inst = instance_from_lists(3, &[&[&[(0, 3), (2, 5)], &[(1, 4)]], &[&[(2, 6), (0, 1), (1, 9)]]]).unwrap();
        assert_eq!(parse_fjs(&write_fjs(&inst)).unwrap(), inst);
    }

    #[test]
    fn taillard_toy_example() {
        let text = "2 2\nTimes\n3 4\n5 6\nMachines\n1 2\n2 1\n";
        let inst = parse_taillard_jssp(text).unwrap();
        let expected = instance_from_lists(2, &[&[&[(0, 3)], &[(1, 4)]], &[&[(1, 5)], &[(0, 6)]]]).unwrap();
        assert_eq!(inst, expected);
        assert_eq!(parse_taillard_jssp(&write_taillard_jssp(&inst).unwrap()).unwrap(), inst);
        assert!(inst.operations().all(|o| o.alternatives.len() == 1));
    }

    #[test]
    fn taillard_with_caption_header() {
        let text = "Nb of jobs, Nb of Machines, Time seed, Machine seed, Upper bound, Lower bound\n\
                    2 2 840612802 398197754 12 10\nTimes\n3 4\n5 6\nMachines\n1 2\n2 1\n";
        assert_eq!(parse_taillard_jssp(text).unwrap().num_operations(), 4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        assert!(matches!(
            parse_taillard_jssp("2 2\n3 4\n5\n1 2\n2 1\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(parse_taillard_jssp("2 2\n3 4\n5 6\n1 2\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn dmu_detects_machine_indexing() {
        let one = parse_dmu("2 2\n3 4\n5 6\n1 2\n2 1\n").unwrap();
        let zero = parse_dmu("2 2\n3 4\n5 6\n0 1\n1 0\n").unwrap();
        assert_eq!(one, zero);
    }
}
