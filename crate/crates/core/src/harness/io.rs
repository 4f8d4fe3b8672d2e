//! File formats: measurement JSON-lines, keyframe JSON, and the CSV
//! artifacts. Every reader reports the offending path (and line, where it
//! applies) so a bad file fails loudly rather than desynchronizing a run.
//!
//! CSV headers:
//! - state CSV: `frame,x000..x107,d00..d14` (full filter state, then the
//!   fifteen filtered pair distances)
//! - truth CSV: `frame,t,d00..d14` (ground-truth pair distances)
//! - series CSV: `mode,frame,t,distance_mae_m,accel_mae_m_s2`
//! - LOS CSV: `frame,t,l00..l14,sigma00..sigma14,sub00..sub14`

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::body::{N_JOINTS, N_PAIRS, N_SENSORS};
use crate::fusion::{PoseSample, RangeObs, N_POSE_PARAMS, N_STATE};
use crate::geometry::Vec3;

use super::trajectory::{Keyframe, KeyframeTrack, Trajectory};
use super::HarnessError;

/// One frame of everything the filter consumes, self-contained so a run
/// can be replayed without the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub t: f64,
    pub accels: [[f64; 3]; N_SENSORS],
    pub ranges: [f64; N_PAIRS],
    pub sigma_d: [f64; N_PAIRS],
    pub substitute: [bool; N_PAIRS],
    pub pose_mean: Vec<f64>,
    pub pose_sigma: Vec<f64>,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.pose_mean.len() != N_POSE_PARAMS || self.pose_sigma.len() != N_POSE_PARAMS {
            return Err(HarnessError::Config(format!(
                "pose fields must have {N_POSE_PARAMS} entries, got {} and {}",
                self.pose_mean.len(),
                self.pose_sigma.len()
            )));
        }
        if !self.t.is_finite() {
            return Err(HarnessError::Config(format!("non-finite timestamp {}", self.t)));
        }
        Ok(())
    }

    pub fn accel_vec3(&self) -> [Vec3; N_SENSORS] {
        std::array::from_fn(|s| Vec3::new(self.accels[s][0], self.accels[s][1], self.accels[s][2]))
    }

    pub fn range_obs(&self) -> RangeObs {
        RangeObs { d: self.ranges, sigma: self.sigma_d, substitute: self.substitute }
    }

    pub fn pose_sample(&self) -> Result<PoseSample, HarnessError> {
        Ok(PoseSample::new(self.pose_mean.clone(), self.pose_sigma.clone())?)
    }
}

pub fn write_measurements_jsonl(
    path: &Path,
    records: &[MeasurementRecord],
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)
            .map_err(|e| HarnessError::Config(format!("serializing measurement: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_measurements_jsonl(path: &Path) -> Result<Vec<MeasurementRecord>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::FileFormat {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MeasurementRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::FileFormat {
                path: path.display().to_string(),
                detail: format!("line {}: {e}", lineno + 1),
            })?;
        rec.validate().map_err(|e| HarnessError::FileFormat {
            path: path.display().to_string(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Keyframe files are a JSON object mapping frame index to sixteen
/// axis-angle triples: `{"0": [[0,0,0], ...], "90": [...]}`.
pub fn write_keyframes(path: &Path, keys: &KeyframeTrack) -> Result<(), HarnessError> {
    let map: BTreeMap<u64, &Vec<[f64; 3]>> =
        keys.iter().map(|k| (k.frame as u64, &k.axis_angles)).collect();
    let text = serde_json::to_string_pretty(&map)
        .map_err(|e| HarnessError::Config(format!("serializing keyframes: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_keyframes(path: &Path) -> Result<KeyframeTrack, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::FileFormat {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let map: BTreeMap<u64, Vec<[f64; 3]>> =
        serde_json::from_str(&text).map_err(|e| HarnessError::FileFormat {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    let keys: KeyframeTrack = map
        .into_iter()
        .map(|(frame, axis_angles)| Keyframe { frame: frame as usize, axis_angles })
        .collect();
    for k in &keys {
        if k.axis_angles.len() != N_JOINTS {
            return Err(HarnessError::FileFormat {
                path: path.display().to_string(),
                detail: format!(
                    "frame {} has {} triples; expected {N_JOINTS}",
                    k.frame,
                    k.axis_angles.len()
                ),
            });
        }
    }
    Ok(keys)
}

/// Full filter state plus filtered distances, one row per frame.
pub fn write_state_csv(
    path: &Path,
    states: &[DVector<f64>],
    distances: &[[f64; N_PAIRS]],
) -> Result<(), HarnessError> {
    if states.len() != distances.len() {
        return Err(HarnessError::LengthMismatch { left: states.len(), right: distances.len() });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "frame")?;
    for i in 0..N_STATE {
        write!(w, ",x{i:03}")?;
    }
    for i in 0..N_PAIRS {
        write!(w, ",d{i:02}")?;
    }
    writeln!(w)?;
    for (frame, (x, d)) in states.iter().zip(distances).enumerate() {
        write!(w, "{frame}")?;
        for v in x.iter() {
            write!(w, ",{v}")?;
        }
        for v in d {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv(path: &Path, traj: &Trajectory) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "frame,t")?;
    for i in 0..N_PAIRS {
        write!(w, ",d{i:02}")?;
    }
    writeln!(w)?;
    for k in 0..traj.len() {
        write!(w, "{k},{}", traj.t[k])?;
        for v in &traj.distances[k] {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-frame error series for each fusion arm, long format.
pub struct SeriesRow {
    pub mode: &'static str,
    pub frame: usize,
    pub t: f64,
    pub distance_mae_m: f64,
    pub accel_mae_m_s2: f64,
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "mode,frame,t,distance_mae_m,accel_mae_m_s2")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.mode, r.frame, r.t, r.distance_mae_m, r.accel_mae_m_s2)?;
    }
    w.flush()?;
    Ok(())
}

/// Line-of-sight profile: per-frame visibility, assigned sigma, and the
/// substitution flag for each pair.
pub fn write_los_csv(
    path: &Path,
    t: &[f64],
    los: &[[f64; N_PAIRS]],
    sigma: &[[f64; N_PAIRS]],
    substitute: &[[bool; N_PAIRS]],
) -> Result<(), HarnessError> {
    if t.len() != los.len() || t.len() != sigma.len() || t.len() != substitute.len() {
        return Err(HarnessError::LengthMismatch { left: t.len(), right: los.len() });
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "frame,t")?;
    for i in 0..N_PAIRS {
        write!(w, ",l{i:02}")?;
    }
    for i in 0..N_PAIRS {
        write!(w, ",sigma{i:02}")?;
    }
    for i in 0..N_PAIRS {
        write!(w, ",sub{i:02}")?;
    }
    writeln!(w)?;
    for k in 0..t.len() {
        write!(w, "{k},{}", t[k])?;
        for v in &los[k] {
            write!(w, ",{v}")?;
        }
        for v in &sigma[k] {
            write!(w, ",{v}")?;
        }
        for v in &substitute[k] {
            write!(w, ",{}", *v as u8)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_record(t: f64) -> MeasurementRecord {
        MeasurementRecord {
            t,
            accels: [[0.1, -0.2, 9.8]; N_SENSORS],
            ranges: [1.25; N_PAIRS],
            sigma_d: [0.03; N_PAIRS],
            substitute: [false; N_PAIRS],
            pose_mean: (0..N_POSE_PARAMS).map(|i| i as f64 * 0.01).collect(),
            pose_sigma: vec![0.05; N_POSE_PARAMS],
        }
    }

    #[test]
    fn measurement_jsonl_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let records: Vec<_> = (0..5).map(|k| sample_record(k as f64 / 60.0)).collect();
        write_measurements_jsonl(&path, &records).unwrap();
        let back = read_measurements_jsonl(&path).unwrap();
        assert_eq!(records, back);
    }

    #[test]
    fn corrupt_jsonl_reports_path_and_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut text = serde_json::to_string(&sample_record(0.0)).unwrap();
        text.push('\n');
        text.push_str("{\"t\": not json\n");
        std::fs::write(&path, text).unwrap();
        let err = read_measurements_jsonl(&path).unwrap_err();
        match err {
            HarnessError::FileFormat { path: p, detail } => {
                assert!(p.ends_with("m.jsonl"));
                assert!(detail.contains("line 2"), "{detail}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn wrong_pose_length_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut rec = sample_record(0.0);
        rec.pose_mean.truncate(10);
        // Serialize by hand; write_measurements would happily emit it, the
        // reader must reject it.
        std::fs::write(&path, serde_json::to_string(&rec).unwrap() + "\n").unwrap();
        assert!(matches!(
            read_measurements_jsonl(&path),
            Err(HarnessError::FileFormat { .. })
        ));
    }

    #[test]
    fn keyframe_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("keys.json");
        let keys: KeyframeTrack = vec![
            Keyframe {
                frame: 0,
                axis_angles: (0..N_JOINTS).map(|j| [j as f64 * 0.1, -0.3, 0.7]).collect(),
            },
            Keyframe { frame: 90, axis_angles: vec![[0.25, 0.5, -1.5]; N_JOINTS] },
        ];
        write_keyframes(&path, &keys).unwrap();
        let back = read_keyframes(&path).unwrap();
        assert_eq!(keys, back);
    }

    #[test]
    fn state_csv_has_documented_shape() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.csv");
        let states = vec![DVector::from_element(N_STATE, 0.5); 3];
        let dists = vec![[1.0; N_PAIRS]; 3];
        write_state_csv(&path, &states, &dists).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("frame,x000,x001"));
        assert!(header.ends_with("d13,d14"));
        assert_eq!(header.split(',').count(), 1 + N_STATE + N_PAIRS);
        assert_eq!(lines.count(), 3);
    }

    #[test]
    fn state_csv_rejects_mismatched_lengths() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("state.csv");
        let states = vec![DVector::from_element(N_STATE, 0.0); 2];
        let dists = vec![[0.0; N_PAIRS]; 3];
        assert!(matches!(
            write_state_csv(&path, &states, &dists),
            Err(HarnessError::LengthMismatch { left: 2, right: 3 })
        ));
    }
}
