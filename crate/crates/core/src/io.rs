//! CSV readers and writers for contours, bench logs, IMU replays, setpoint
//! schedules and command streams.

use std::io::{Read, Write};
use std::path::Path;

use crate::bench::BenchRecord;
use crate::error::{Error, Result};
use crate::estimation::ImuSample;
use crate::morphology::{Point, SplineModel};
use crate::sim::SetpointStep;

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_csv<W: Write, R: IntoIterator<Item = Vec<String>>>(
    w: W,
    header: &[&str],
    rows: R,
) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.write_record(&r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_csv_file<R: IntoIterator<Item = Vec<String>>>(
    path: &Path,
    header: &[&str],
    rows: R,
) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(std::io::BufWriter::new(f), header, rows)
}

/// A numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::Input(format!("missing column `{name}`")))
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }
}

pub fn read_table<R: Read>(r: R) -> Result<Table> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>().map_err(|_| {
                    Error::Input(format!(
                        "row {}, column `{}`: `{s}` is not a number",
                        i + 2,
                        headers.get(j).map(String::as_str).unwrap_or("?")
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

pub fn read_table_file(path: &Path) -> Result<Table> {
    read_table(std::fs::File::open(path)?)
}

/// Contour points from columns `x, y` (pixels).
pub fn read_contour<R: Read>(r: R) -> Result<Vec<Point>> {
    let t = read_table(r)?;
    let (x, y) = (t.require("x")?, t.require("y")?);
    Ok(t.rows.iter().map(|r| [r[x], r[y]]).collect())
}

pub fn write_points<W: Write>(w: W, points: &[Point]) -> Result<()> {
    write_csv(
        w,
        &["x", "y"],
        points.iter().map(|p| vec![num(p[0]), num(p[1])]),
    )
}

/// Control polygon as `i, x, y`.
pub fn write_control_points<W: Write>(w: W, model: &SplineModel) -> Result<()> {
    write_csv(
        w,
        &["i", "x", "y"],
        model
            .control_points
            .iter()
            .enumerate()
            .map(|(i, p)| vec![i.to_string(), num(p[0]), num(p[1])]),
    )
}

pub fn read_control_points<R: Read>(r: R) -> Result<SplineModel> {
    let t = read_table(r)?;
    let (x, y) = (t.require("x")?, t.require("y")?);
    let mut rows: Vec<(f64, Point)> = match t.column_index("i") {
        Some(i) => t.rows.iter().map(|r| (r[i], [r[x], r[y]])).collect(),
        None => t
            .rows
            .iter()
            .enumerate()
            .map(|(k, r)| (k as f64, [r[x], r[y]]))
            .collect(),
    };
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    SplineModel::new(rows.into_iter().map(|r| r.1).collect())
}

pub const BENCH_COLUMNS: [&str; 9] = ["t", "Fx", "Fy", "Fz", "Mx", "My", "Mz", "pwm_L", "pwm_R"];

/// Bench log; extra marker columns are ignored, an optional `stroke` column
/// is kept.
pub fn read_bench<R: Read>(r: R) -> Result<BenchRecord> {
    let t = read_table(r)?;
    let idx = BENCH_COLUMNS
        .iter()
        .map(|c| t.require(c))
        .collect::<Result<Vec<usize>>>()?;
    let stroke = t.column_index("stroke");
    let rec = BenchRecord {
        t: t.column(idx[0]),
        force: t.rows.iter().map(|r| [r[idx[1]], r[idx[2]], r[idx[3]]]).collect(),
        torque: t.rows.iter().map(|r| [r[idx[4]], r[idx[5]], r[idx[6]]]).collect(),
        pwm: t.rows.iter().map(|r| [r[idx[7]], r[idx[8]]]).collect(),
        stroke: stroke.map(|s| t.column(s)),
    };
    rec.validate()?;
    Ok(rec)
}

pub fn write_bench<W: Write>(w: W, rec: &BenchRecord) -> Result<()> {
    let mut header: Vec<&str> = BENCH_COLUMNS.to_vec();
    if rec.stroke.is_some() {
        header.push("stroke");
    }
    write_csv(
        w,
        &header,
        (0..rec.len()).map(|i| {
            let mut r = vec![num(rec.t[i])];
            r.extend(rec.force[i].iter().map(|v| num(*v)));
            r.extend(rec.torque[i].iter().map(|v| num(*v)));
            r.extend(rec.pwm[i].iter().map(|v| num(*v)));
            if let Some(s) = &rec.stroke {
                r.push(num(s[i]));
            }
            r
        }),
    )
}

/// IMU replay: `t, gx, gy, gz` (rad/s), `ax, ay, az` (g).
pub fn read_imu<R: Read>(r: R) -> Result<Vec<ImuSample>> {
    let t = read_table(r)?;
    let idx = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
        .iter()
        .map(|c| t.require(c))
        .collect::<Result<Vec<usize>>>()?;
    Ok(t.rows
        .iter()
        .map(|r| ImuSample {
            t: r[idx[0]],
            gyro: [r[idx[1]], r[idx[2]], r[idx[3]]],
            accel: [r[idx[4]], r[idx[5]], r[idx[6]]],
        })
        .collect())
}

/// Setpoint schedule `t, pitch_ref, yaw_ref`, sorted by time.
pub fn read_setpoints<R: Read>(r: R) -> Result<Vec<SetpointStep>> {
    let t = read_table(r)?;
    let (ti, p, y) = (t.require("t")?, t.require("pitch_ref")?, t.require("yaw_ref")?);
    let mut s: Vec<SetpointStep> = t
        .rows
        .iter()
        .map(|r| SetpointStep {
            t: r[ti],
            pitch_ref: r[p],
            yaw_ref: r[y],
        })
        .collect();
    s.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(s)
}

/// Per-wing command at a servo tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WingCommand {
    pub tick: u64,
    pub a_l: f64,
    pub a_r: f64,
    pub delta_l: f64,
    pub delta_r: f64,
}

/// Command stream `tick, A_L, A_R, delta_L, delta_R`; each row holds until
/// the next one.
pub fn read_commands<R: Read>(r: R) -> Result<Vec<WingCommand>> {
    let t = read_table(r)?;
    let idx = ["tick", "A_L", "A_R", "delta_L", "delta_R"]
        .iter()
        .map(|c| t.require(c))
        .collect::<Result<Vec<usize>>>()?;
    let mut out = Vec::with_capacity(t.rows.len());
    for r in &t.rows {
        let tick = r[idx[0]];
        if !(tick >= 0.0 && tick.fract() == 0.0) {
            return Err(Error::Input(format!("tick `{tick}` is not a non-negative integer")));
        }
        out.push(WingCommand {
            tick: tick as u64,
            a_l: r[idx[1]],
            a_r: r[idx[2]],
            delta_l: r[idx[3]],
            delta_r: r[idx[4]],
        });
    }
    out.sort_by_key(|c| c.tick);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_round_trip() {
        let rec = BenchRecord {
            t: vec![0.0, 0.5],
            force: vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
            torque: vec![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]],
            pwm: vec![[1500.0, 1500.0], [1600.0, 1400.0]],
            stroke: Some(vec![0.0, 1.25]),
        };
        let mut buf = Vec::new();
        write_bench(&mut buf, &rec).unwrap();
        assert_eq!(read_bench(buf.as_slice()).unwrap(), rec);
    }

    #[test]
    fn bad_number_names_row_and_column() {
        let err = read_table("x,y\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("`y`"), "{msg}");
    }

    #[test]
    fn commands_sorted_and_checked() {
        let c = read_commands("tick,A_L,A_R,delta_L,delta_R\n5,0.1,0,0,0\n0,0,0,0,0\n".as_bytes())
            .unwrap();
        assert_eq!(c[0].tick, 0);
        assert!(read_commands("tick,A_L,A_R,delta_L,delta_R\n1.5,0,0,0,0\n".as_bytes()).is_err());
    }
}
