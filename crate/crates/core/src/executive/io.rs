use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::{EventRecord, TrajectoryTable, TriggerCause};
use crate::error::{Error, Result};
use crate::estimator::GramSystem;

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn numbered(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (1..=k).map(move |i| format!("{prefix}_{i}"))
}

/// Columns `t, x_1..x_n, u_1..u_m, thetahat_1..thetahat_l, V, threshold,
/// event_flag`.
pub fn write_trajectory_csv<W: Write>(table: &TrajectoryTable, out: W) -> Result<()> {
    let n = table.x.first().map_or(0, Vec::len);
    let m = table.u.first().map_or(0, Vec::len);
    let l = table.thetahat.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(numbered("x", n))
        .chain(numbered("u", m))
        .chain(numbered("thetahat", l))
        .chain(["V", "threshold", "event_flag"].map(String::from))
        .collect();
    w.write_record(&header)?;
    for k in 0..table.len() {
        let row: Vec<String> = std::iter::once(f(table.t[k]))
            .chain(table.x[k].iter().copied().map(f))
            .chain(table.u[k].iter().copied().map(f))
            .chain(table.thetahat[k].iter().copied().map(f))
            .chain([f(table.v[k]), f(table.threshold[k])])
            .chain(std::iter::once(u8::from(table.event_flag[k]).to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `index, t, cause, mu, rank, update_distance, x_*, thetahat_prev_*,
/// thetahat_*, G_a_b (row-major), Z_*`.
pub fn write_events_csv<W: Write>(events: &[EventRecord], n: usize, l: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = ["index", "t", "cause", "mu", "rank", "update_distance"]
        .map(String::from)
        .into_iter()
        .chain(numbered("x", n))
        .chain(numbered("thetahat_prev", l))
        .chain(numbered("thetahat", l))
        .chain((1..=l).flat_map(|a| (1..=l).map(move |b| format!("G_{a}_{b}"))))
        .chain(numbered("Z", l))
        .collect();
    w.write_record(&header)?;
    for e in events {
        let row: Vec<String> = [
            e.index.to_string(),
            f(e.time),
            e.cause.as_str().to_string(),
            f(e.window.0),
            e.rank.to_string(),
            f(e.update_distance),
        ]
        .into_iter()
        .chain(e.state.iter().copied().map(f))
        .chain(e.estimate_prev.iter().copied().map(f))
        .chain(e.estimate.iter().copied().map(f))
        .chain((0..l).flat_map(|a| (0..l).map(move |b| f(e.gram.g[(a, b)]))))
        .chain(e.gram.z.iter().copied().map(f))
        .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Columns {
    names: Vec<String>,
}

impl Columns {
    fn count(&self, prefix: &str) -> usize {
        let mut k = 0;
        while self.names.iter().any(|h| *h == format!("{prefix}_{}", k + 1)) {
            k += 1;
        }
        k
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("CSV lacks column `{name}`")))
    }
}

fn parse_f64(s: &str, col: &str, row: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(format!("row {row}, column `{col}`: `{s}` is not a number")))
}

fn read_rows<R: Read>(input: R) -> Result<(Columns, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_reader(input);
    let names = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((Columns { names }, rows))
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<TrajectoryTable> {
    let (cols, rows) = read_rows(input)?;
    let (n, m, l) = (cols.count("x"), cols.count("u"), cols.count("thetahat"));
    let get = |rec: &csv::StringRecord, name: &str, row: usize| -> Result<f64> {
        let i = cols.index(name)?;
        parse_f64(rec.get(i).unwrap_or(""), name, row)
    };
    let vecs = |rec: &csv::StringRecord, prefix: &str, k: usize, row: usize| -> Result<Vec<f64>> {
        (1..=k).map(|i| get(rec, &format!("{prefix}_{i}"), row)).collect()
    };
    let mut t = TrajectoryTable {
        t: Vec::with_capacity(rows.len()),
        x: Vec::with_capacity(rows.len()),
        u: Vec::with_capacity(rows.len()),
        thetahat: Vec::with_capacity(rows.len()),
        v: Vec::with_capacity(rows.len()),
        threshold: Vec::with_capacity(rows.len()),
        event_flag: Vec::with_capacity(rows.len()),
    };
    for (row, rec) in rows.iter().enumerate() {
        let row = row + 1;
        t.t.push(get(rec, "t", row)?);
        t.x.push(vecs(rec, "x", n, row)?);
        t.u.push(vecs(rec, "u", m, row)?);
        t.thetahat.push(vecs(rec, "thetahat", l, row)?);
        t.v.push(get(rec, "V", row)?);
        t.threshold.push(get(rec, "threshold", row)?);
        let flag = get(rec, "event_flag", row)?;
        if flag != 0.0 && flag != 1.0 {
            return Err(Error::invalid(format!("row {row}: event_flag must be 0 or 1")));
        }
        t.event_flag.push(flag == 1.0);
    }
    Ok(t)
}

pub fn read_events_csv<R: Read>(input: R) -> Result<Vec<EventRecord>> {
    let (cols, rows) = read_rows(input)?;
    let n = cols.count("x");
    let l = cols.count("thetahat_prev");
    let get_str = |rec: &csv::StringRecord, name: &str| -> Result<String> {
        let i = cols.index(name)?;
        Ok(rec.get(i).unwrap_or("").to_string())
    };
    let get = |rec: &csv::StringRecord, name: &str, row: usize| -> Result<f64> {
        parse_f64(&get_str(rec, name)?, name, row)
    };
    let vecs = |rec: &csv::StringRecord, prefix: &str, k: usize, row: usize| -> Result<Vec<f64>> {
        (1..=k).map(|i| get(rec, &format!("{prefix}_{i}"), row)).collect()
    };
    let mut out = Vec::with_capacity(rows.len());
    for (row, rec) in rows.iter().enumerate() {
        let row = row + 1;
        let cause_s = get_str(rec, "cause")?;
        let cause = TriggerCause::parse(cause_s.trim())
            .ok_or_else(|| Error::invalid(format!("row {row}: unknown cause `{cause_s}`")))?;
        let time = get(rec, "t", row)?;
        let mu = get(rec, "mu", row)?;
        let mut g = DMatrix::zeros(l, l);
        for a in 0..l {
            for b in 0..l {
                g[(a, b)] = get(rec, &format!("G_{}_{}", a + 1, b + 1), row)?;
            }
        }
        let z = DVector::from_vec(vecs(rec, "Z", l, row)?);
        let index = get(rec, "index", row)?;
        let rank = get(rec, "rank", row)?;
        out.push(EventRecord {
            index: index as usize,
            time,
            state: vecs(rec, "x", n, row)?,
            estimate_prev: vecs(rec, "thetahat_prev", l, row)?,
            estimate: vecs(rec, "thetahat", l, row)?,
            cause,
            window: (mu, time),
            gram: GramSystem::new(g, z, (mu, time))?,
            rank: rank as usize,
            update_distance: get(rec, "update_distance", row)?,
        });
    }
    Ok(out)
}
