use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cloud::csv_error;
use super::metrics::{AccuracyReport, PoseErrorRecord, DOF};
use crate::error::{Error, Result};
use crate::render::{Pose6D, RenderedImage};

const CORRELATION_HEADER: [&str; 14] = [
    "pose_id", "detected", "X", "Y", "Z", "roll", "pitch", "yaw", "eX", "eY", "eZ", "eRoll", "ePitch", "eYaw",
];

const DETECTION_HEADER: [&str; 8] = ["pose_id", "detected", "estX", "estY", "estZ", "estRoll", "estPitch", "estYaw"];

fn check_header(path: &Path, r: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<()> {
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(path, format!("header must be {}", expected.join(","))));
    }
    Ok(())
}

/// Long-format table: one row per pose with truth values and signed errors.
/// Errors are left empty for undetected poses.
pub fn write_correlation_csv(path: impl AsRef<Path>, records: &[PoseErrorRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CORRELATION_HEADER).map_err(|e| csv_error(path, e))?;
    for r in records {
        let mut row = vec![r.pose_id.to_string(), u8::from(r.is_detected()).to_string()];
        row.extend(r.values().iter().map(|v| v.to_string()));
        match r.errors() {
            Some(e) => row.extend(e.iter().map(|v| v.to_string())),
            None => row.extend(std::iter::repeat(String::new()).take(6)),
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a correlation table back into records that aggregate identically.
pub fn read_correlation_csv(path: impl AsRef<Path>) -> Result<Vec<PoseErrorRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    check_header(path, &mut r, &CORRELATION_HEADER)?;
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let bad = |msg: String| Error::parse(path, format!("row {}: {msg}", line + 1));
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| bad(format!("column {} is not a number", CORRELATION_HEADER[i])))
        };
        let pose_id = rec[0].trim().parse::<u64>().map_err(|_| bad("bad pose_id".into()))?;
        let truth = Pose6D::new(num(2)?, num(3)?, num(4)?, num(5)?, num(6)?, num(7)?);
        let record = match rec[1].trim() {
            "1" => {
                let mut e = [0.0; 6];
                for (d, v) in e.iter_mut().enumerate() {
                    *v = num(8 + d)?;
                }
                PoseErrorRecord::from_errors(pose_id, truth, e)
            }
            "0" => PoseErrorRecord::missed(pose_id, truth),
            other => return Err(bad(format!("detected must be 0 or 1, got {other:?}"))),
        };
        out.push(record);
    }
    Ok(out)
}

/// One row of the detection-results exchange format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub pose_id: u64,
    pub estimate: Option<Pose6D>,
}

pub fn write_detections_csv(path: impl AsRef<Path>, rows: &[DetectionRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(DETECTION_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        let mut row = vec![r.pose_id.to_string()];
        match r.estimate {
            Some(p) => {
                row.push("1".into());
                row.extend([p.x, p.y, p.z, p.roll, p.pitch, p.yaw].iter().map(|v| v.to_string()));
            }
            None => {
                row.push("0".into());
                row.extend(std::iter::repeat(String::new()).take(6));
            }
        }
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses and validates a detection-results CSV. Every malformed row is
/// listed in the error.
pub fn read_detections_csv(path: impl AsRef<Path>) -> Result<Vec<DetectionRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    check_header(path, &mut r, &DETECTION_HEADER)?;
    let mut rows = Vec::new();
    let mut problems = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, rec) in r.records().enumerate() {
        let row_no = line + 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                problems.push(format!("row {row_no}: {e}"));
                continue;
            }
        };
        match parse_detection(&rec) {
            Ok(row) => {
                if !seen.insert(row.pose_id) {
                    problems.push(format!("row {row_no}: duplicate pose_id {}", row.pose_id));
                } else {
                    rows.push(row);
                }
            }
            Err(msg) => problems.push(format!("row {row_no}: {msg}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::parse(path, format!("invalid detection rows:\n  {}", problems.join("\n  "))));
    }
    Ok(rows)
}

fn parse_detection(rec: &csv::StringRecord) -> std::result::Result<DetectionRow, String> {
    let pose_id = rec[0].trim().parse::<u64>().map_err(|_| format!("pose_id {:?} is not an integer", &rec[0]))?;
    let fields: Vec<&str> = (2..8).map(|i| rec[i].trim()).collect();
    match rec[1].trim() {
        "0" => {
            if let Some(i) = fields.iter().position(|f| !f.is_empty() && f.parse::<f64>().map_or(true, |v| !v.is_nan())) {
                return Err(format!("{} must be empty when detected = 0", DETECTION_HEADER[i + 2]));
            }
            Ok(DetectionRow { pose_id, estimate: None })
        }
        "1" => {
            let mut v = [0.0; 6];
            for (i, f) in fields.iter().enumerate() {
                v[i] = f
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| format!("{} {f:?} is not a finite number", DETECTION_HEADER[i + 2]))?;
            }
            let pose = Pose6D::new(v[0], v[1], v[2], v[3], v[4], v[5]);
            pose.validate().map_err(|e| e.to_string())?;
            Ok(DetectionRow {
                pose_id,
                estimate: Some(pose),
            })
        }
        other => Err(format!("detected must be 0 or 1, got {other:?}")),
    }
}

/// Scores detection rows against ground truth. Poses without a row count as
/// undetected; rows for unknown poses are rejected.
pub fn records_from_detections(truth: &[(u64, Pose6D)], rows: &[DetectionRow]) -> Result<Vec<PoseErrorRecord>> {
    let by_id: BTreeMap<u64, &DetectionRow> = rows.iter().map(|r| (r.pose_id, r)).collect();
    let known: std::collections::BTreeSet<u64> = truth.iter().map(|t| t.0).collect();
    let unknown: Vec<String> = by_id.keys().filter(|id| !known.contains(id)).map(|id| id.to_string()).collect();
    if !unknown.is_empty() {
        return Err(Error::Input(format!("detections for unknown pose ids: {}", unknown.join(", "))));
    }
    let mut out: Vec<PoseErrorRecord> = truth
        .iter()
        .map(|&(id, t)| match by_id.get(&id).and_then(|r| r.estimate) {
            Some(est) => PoseErrorRecord::detected(id, t, est),
            None => PoseErrorRecord::missed(id, t),
        })
        .collect();
    out.sort_by_key(|r| r.pose_id);
    Ok(out)
}

/// Pearson correlation of each truth value (column) with each error (row)
/// over the detected records. NaN where a series is constant.
pub fn correlation_matrix(records: &[PoseErrorRecord]) -> [[f64; 6]; 6] {
    let pairs: Vec<([f64; 6], [f64; 6])> =
        records.iter().filter_map(|r| r.errors().map(|e| (r.values(), e))).collect();
    let mut out = [[f64::NAN; 6]; 6];
    let n = pairs.len() as f64;
    if pairs.is_empty() {
        return out;
    }
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mx = pairs.iter().map(|p| p.0[j]).sum::<f64>() / n;
            let my = pairs.iter().map(|p| p.1[i]).sum::<f64>() / n;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (v, e) in &pairs {
                let (dx, dy) = (v[j] - mx, e[i] - my);
                sxy += dx * dy;
                sxx += dx * dx;
                syy += dy * dy;
            }
            let constant = |f: &dyn Fn(&([f64; 6], [f64; 6])) -> f64| pairs.iter().all(|p| f(p) == f(&pairs[0]));
            if !constant(&|p| p.0[j]) && !constant(&|p| p.1[i]) {
                *cell = sxy / (sxx * syy).sqrt();
            }
        }
    }
    out
}

/// 6x6 grid of scatter panels: row i plots error i against truth value j.
/// Each panel carries a dashed line at the mean error and dotted lines at
/// the mean plus and minus one standard deviation.
pub fn scatter_svg(records: &[PoseErrorRecord], report: &AccuracyReport) -> String {
    const PANEL: f64 = 160.0;
    const PAD: f64 = 24.0;
    let pts: Vec<([f64; 6], [f64; 6])> =
        records.iter().filter_map(|r| r.errors().map(|e| (r.values(), e))).collect();
    let range = |f: &dyn Fn(&([f64; 6], [f64; 6])) -> f64, extra: &[f64]| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in pts.iter().map(f).chain(extra.iter().copied()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo < hi) {
            let c = if lo.is_finite() { lo } else { 0.0 };
            (c - 1.0, c + 1.0)
        } else {
            let m = 0.05 * (hi - lo);
            (lo - m, hi + m)
        }
    };
    let size = 6.0 * (PANEL + PAD) + PAD;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" font-family="sans-serif" font-size="9">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for i in 0..6 {
        let (mean, sd) = (report.bias[i], report.std_dev[i]);
        let (ylo, yhi) = range(&|p| p.1[i], &[mean - sd, mean + sd]);
        for j in 0..6 {
            let (xlo, xhi) = range(&|p| p.0[j], &[]);
            let ox = PAD + j as f64 * (PANEL + PAD);
            let oy = PAD + i as f64 * (PANEL + PAD);
            let sx = |v: f64| ox + (v - xlo) / (xhi - xlo) * PANEL;
            let sy = |v: f64| oy + PANEL - (v - ylo) / (yhi - ylo) * PANEL;
            let _ = writeln!(
                s,
                r##"<g><rect x="{ox:.2}" y="{oy:.2}" width="{PANEL}" height="{PANEL}" fill="none" stroke="#888"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">e{} vs {}</text>"#,
                ox + 2.0,
                oy - 3.0,
                DOF[i],
                DOF[j]
            );
            for (v, e) in &pts {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="1.2" fill="#1f77b4"/>"##,
                    sx(v[j]),
                    sy(e[i])
                );
            }
            let hline = |y: f64, dash: &str| {
                format!(
                    r##"<line x1="{ox:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="{dash}"/>"##,
                    ox + PANEL
                )
            };
            let _ = writeln!(s, "{}", hline(sy(mean), "6,3"));
            let _ = writeln!(s, "{}", hline(sy(mean - sd), "1,2"));
            let _ = writeln!(s, "{}", hline(sy(mean + sd), "1,2"));
            let _ = writeln!(s, "</g>");
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.csv`, `summary.txt`, `correlation.csv` and `scatter.svg`
/// into `dir`.
pub fn write_report(dir: impl AsRef<Path>, records: &[PoseErrorRecord], report: &AccuracyReport) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("dof,accuracy,bias,std_dev\n");
    for d in 0..6 {
        let _ = writeln!(csv, "{},{},{},{}", DOF[d], report.accuracy[d], report.bias[d], report.std_dev[d]);
    }
    let _ = writeln!(csv, "detection_rate,{},,", report.detection_rate);
    let put = |name: &str, body: &str| {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    put("report.csv", &csv)?;
    put("summary.txt", &report.summary())?;
    put("scatter.svg", &scatter_svg(records, report))?;
    write_correlation_csv(dir.join("correlation.csv"), records)
}

/// 8-bit RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl DiffImage {
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let img = image::RgbImage::from_raw(self.width, self.height, self.rgb.clone()).expect("sized buffer");
        img.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::parse(path, other),
        })
    }
}

/// Per-pixel overlay `(a, b, b)`: equal pixels stay gray, `a > b` tints red
/// and `a < b` tints cyan, in proportion to the difference.
pub fn overlay_diff(a: &RenderedImage, b: &RenderedImage) -> Result<DiffImage> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Input(format!(
            "overlay needs equal sizes, got {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let to8 = |img: &RenderedImage, v: u16| -> u8 {
        if img.bit_depth == 8 {
            v as u8
        } else {
            (v as f64 / img.max_value() as f64 * 255.0).round() as u8
        }
    };
    let mut rgb = Vec::with_capacity(a.pixels.len() * 3);
    for (&pa, &pb) in a.pixels.iter().zip(&b.pixels) {
        let (va, vb) = (to8(a, pa), to8(b, pb));
        rgb.extend_from_slice(&[va, vb, vb]);
    }
    Ok(DiffImage {
        width: a.width,
        height: a.height,
        rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::accuracy;

    fn img(pixels: Vec<u16>) -> RenderedImage {
        RenderedImage {
            width: 2,
            height: 2,
            bit_depth: 8,
            pixels,
            metadata: Default::default(),
        }
    }

    fn sample_records() -> Vec<PoseErrorRecord> {
        (0..50u64)
            .map(|i| {
                let f = i as f64;
                let t = Pose6D::new(f * 3.1 - 70.0, 0.7 * f, 500.0 + 19.3 * f, f - 25.0, 0.5 * f, 7.0 * f - 170.0);
                if i % 7 == 3 {
                    PoseErrorRecord::missed(i, t)
                } else {
                    PoseErrorRecord::from_errors(i, t, [0.01 * t.x, (f * 0.37).sin(), 0.1 / 3.0 * f, -0.2, 1e-17 * f, 179.9])
                }
            })
            .collect()
    }

    #[test]
    fn correlation_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let recs = sample_records();
        write_correlation_csv(&p, &recs).unwrap();
        let back = read_correlation_csv(&p).unwrap();
        assert_eq!(accuracy(&back).unwrap(), accuracy(&recs).unwrap());
        for (a, b) in back.iter().zip(&recs) {
            assert_eq!(a.errors(), b.errors());
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn constructed_correlation_is_linear() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_correlation_csv(&p, &sample_records()).unwrap();
        let m = correlation_matrix(&read_correlation_csv(&p).unwrap());
        assert!(m[0][0] > 0.999);
        // a constant error has no defined correlation
        assert!(m[3][0].is_nan());
    }

    #[test]
    fn svg_panels() {
        let recs = vec![PoseErrorRecord::from_errors(0, Pose6D::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0), [0.5; 6])];
        let rep = accuracy(&recs).unwrap();
        let svg = scatter_svg(&recs, &rep);
        assert_eq!(svg.matches("<circle").count(), 36);
        assert_eq!(svg.matches("stroke-dasharray=\"6,3\"").count(), 36);
        // sigma = 0: dotted lines sit on the dashed one
        let y_of = |dash: &str| -> Vec<String> {
            svg.lines()
                .filter(|l| l.contains(dash))
                .map(|l| l.split("y1=\"").nth(1).unwrap().split('"').next().unwrap().to_string())
                .collect()
        };
        let dashed = y_of("6,3");
        let dotted = y_of("1,2");
        for (i, d) in dashed.iter().enumerate() {
            assert_eq!(&dotted[2 * i], d);
            assert_eq!(&dotted[2 * i + 1], d);
        }
    }

    #[test]
    fn detection_csv_round_trip_and_scoring() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let truth: Vec<(u64, Pose6D)> =
            (0..3).map(|i| (i, Pose6D::new(0.0, 0.0, 600.0 + i as f64, 0.0, 0.0, 179.0))).collect();
        let est = Pose6D::new(1.0, -2.0, 624.2, 0.0, 0.0, -179.0);
        let rows = vec![
            DetectionRow { pose_id: 0, estimate: Some(est) },
            DetectionRow { pose_id: 2, estimate: None },
        ];
        write_detections_csv(&p, &rows).unwrap();
        let back = read_detections_csv(&p).unwrap();
        assert_eq!(back, rows);
        let recs = records_from_detections(&truth, &back).unwrap();
        assert_eq!(recs.len(), 3);
        let e = recs[0].errors().unwrap();
        assert!((e[2] - 24.2).abs() < 1e-9 && (e[5] - 2.0).abs() < 1e-9);
        assert!(!recs[1].is_detected() && !recs[2].is_detected());
        let stray = [DetectionRow { pose_id: 9, estimate: None }];
        assert!(matches!(records_from_detections(&truth, &stray), Err(Error::Input(_))));
    }

    #[test]
    fn detection_csv_lists_offending_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(
            &p,
            "pose_id,detected,estX,estY,estZ,estRoll,estPitch,estYaw\n\
             0,1,0,0,500,0,0,0\n\
             1,2,,,,,,\n\
             2,1,0,0,abc,0,0,0\n\
             3,0,,,,,,\n\
             x,0,,,,,,\n",
        )
        .unwrap();
        let msg = read_detections_csv(&p).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("row 3") && msg.contains("row 5"), "{msg}");
        assert!(!msg.contains("row 1:") && !msg.contains("row 4"), "{msg}");

        std::fs::write(&p, "id,detected\n").unwrap();
        assert!(matches!(read_detections_csv(&p), Err(Error::Parse { .. })));
    }

    #[test]
    fn all_undetected_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let truth: Vec<(u64, Pose6D)> = (0..4).map(|i| (i, Pose6D::new(0.0, 0.0, 700.0, 0.0, 0.0, 0.0))).collect();
        let rows: Vec<DetectionRow> = (0..4).map(|i| DetectionRow { pose_id: i, estimate: None }).collect();
        write_detections_csv(&p, &rows).unwrap();
        let recs = records_from_detections(&truth, &read_detections_csv(&p).unwrap()).unwrap();
        assert!(matches!(accuracy(&recs), Err(Error::EmptyReport)));
    }

    #[test]
    fn overlay_colors() {
        let same = overlay_diff(&img(vec![0, 50, 128, 255]), &img(vec![0, 50, 128, 255])).unwrap();
        for y in 0..2 {
            for x in 0..2 {
                let [r, g, b] = same.pixel(x, y);
                assert!(r == g && g == b);
            }
        }
        let red = overlay_diff(&img(vec![255; 4]), &img(vec![0; 4])).unwrap();
        assert!(red.rgb.chunks(3).all(|c| c == [255, 0, 0]));
        let cyan = overlay_diff(&img(vec![0; 4]), &img(vec![255; 4])).unwrap();
        assert!(cyan.rgb.chunks(3).all(|c| c == [0, 255, 255]));
        let one = overlay_diff(&img(vec![100, 101, 100, 100]), &img(vec![100; 4])).unwrap();
        assert_eq!(one.pixel(1, 0), [101, 100, 100]);
        assert_eq!(one.pixel(0, 0), [100, 100, 100]);
        let small = RenderedImage { width: 1, height: 4, ..img(vec![0; 4]) };
        assert!(matches!(overlay_diff(&small, &img(vec![0; 4])), Err(Error::Input(_))));
    }
}
