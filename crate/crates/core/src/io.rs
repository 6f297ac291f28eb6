//! Text file formats: HSC1 cubes, CSV matrices, plain PPM images, traces,
//! evaluation reports and flat key-value documents.
//!
//! Every real is written with 17 significant digits, so each reader returns
//! exactly the values its writer was given.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{Assignment, EvalReport};
use crate::solver::{column_sum_to_one, SolveTrace};
use crate::sparsity::GuidanceMap;

const CUBE_MAGIC: &str = "HSC1";

/// Red, blue, green and black first; four extension inks after that.
pub const PALETTE: [[u8; 3]; 8] = [
    [255, 0, 0],
    [0, 0, 255],
    [0, 255, 0],
    [0, 0, 0],
    [255, 255, 0],
    [0, 255, 255],
    [255, 0, 255],
    [128, 128, 128],
];

pub const TRACE_HEADER: &str = "outer,inner,objective,loss,penalty,max_change";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Formats a real with 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes `contents` to `path`, creating nothing but the file itself.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

fn parse_real(path: &Path, line: usize, tok: &str) -> Result<f64> {
    tok.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("not a number: {tok:?}")))
}

// ---------------------------------------------------------------- cubes

pub fn cube_to_string(cube: &SpectralCube) -> String {
    let mut out = format!(
        "{CUBE_MAGIC} {} {} {}\n",
        cube.channels(),
        cube.width(),
        cube.height()
    );
    for l in 0..cube.channels() {
        let row: Vec<String> = cube.data().row(l).iter().map(|&v| fmt_real(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_cube(cube: &SpectralCube, path: &Path) -> Result<()> {
    write_text(path, &cube_to_string(cube))
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    parse_cube(path, &read_text(path)?)
}

/// Parses HSC1 text; `path` only labels errors.
pub fn parse_cube(path: &Path, text: &str) -> Result<SpectralCube> {
    let mut lines = text.lines().enumerate().map(|(i, s)| (i + 1, s));
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != CUBE_MAGIC {
        return Err(parse_err(
            path,
            1,
            format!("expected `{CUBE_MAGIC} <L> <W> <H>`, got {header:?}"),
        ));
    }
    let dims: Vec<usize> = fields[1..]
        .iter()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, 1, format!("bad dimensions in {header:?}")))?;
    let (l, w, h) = (dims[0], dims[1], dims[2]);
    if l == 0 || w == 0 || h == 0 {
        return Err(parse_err(path, 1, "dimensions must be positive"));
    }
    let n = w * h;
    let mut data = Vec::with_capacity(l * n);
    let mut seen = 0;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if seen == l {
            return Err(parse_err(
                path,
                lineno,
                format!("more than {l} channel lines"),
            ));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = parse_real(path, lineno, tok)?;
            if v.is_nan() || v < 0.0 || v.is_infinite() {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("value {tok} is not a finite nonnegative real"),
                ));
            }
            data.push(v);
        }
        if data.len() - before != n {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {n} values, found {}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != l {
        return Err(parse_err(
            path,
            seen + 2,
            format!("expected {l} channel lines, found {seen}"),
        ));
    }
    SpectralCube::new(w, h, Matrix::from_vec(l, n, data)?)
}

// ---------------------------------------------------------------- matrices

pub fn matrix_to_csv(m: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|&v| fmt_real(v)).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(m: &Matrix, path: &Path) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    parse_matrix_csv(path, &read_text(path)?)
}

pub fn parse_matrix_csv(path: &Path, text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| parse_real(path, i + 1, tok))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("ragged row: {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no rows"));
    }
    Matrix::from_rows(&rows)
}

// ---------------------------------------------------------------- guidance

/// Guidance map as a single CSV row.
pub fn write_guidance_csv(h: &GuidanceMap, path: &Path) -> Result<()> {
    write_matrix_csv(&Matrix::from_vec(1, h.len(), h.values().to_vec())?, path)
}

/// Reads a 1×N guidance row and checks it lies in `[0, 0.5]`.
pub fn read_guidance_csv(path: &Path) -> Result<GuidanceMap> {
    let m = read_matrix_csv(path)?;
    if m.rows() != 1 {
        return Err(parse_err(
            path,
            2,
            format!("guidance map must be one row, found {}", m.rows()),
        ));
    }
    GuidanceMap::rescaled(m.into_vec())
}

// ---------------------------------------------------------------- images

fn ppm(w: usize, h: usize, pixels: &[[u8; 3]]) -> String {
    let mut out = format!("P3\n{w} {h}\n255\n");
    for row in pixels.chunks(w) {
        let line: Vec<String> = row
            .iter()
            .map(|p| format!("{} {} {}", p[0], p[1], p[2]))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn check_image(n: usize, w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 || w * h != n {
        return Err(Error::invalid(format!(
            "image {w}x{h} does not hold {n} pixels"
        )));
    }
    Ok(())
}

/// Pseudo-color rendering: each pixel mixes the palette inks in proportion
/// to its (column-normalized) abundances.
pub fn abundance_ppm(a: &Matrix, w: usize, h: usize) -> Result<String> {
    let k = a.rows();
    if k > PALETTE.len() {
        return Err(Error::invalid(format!(
            "{k} endmembers exceed the {}-color palette",
            PALETTE.len()
        )));
    }
    check_image(a.cols(), w, h)?;
    let a = column_sum_to_one(a);
    let pixels: Vec<[u8; 3]> = (0..a.cols())
        .map(|n| {
            let mut rgb = [0.0f64; 3];
            for (r, ink) in PALETTE.iter().enumerate().take(k) {
                for c in 0..3 {
                    rgb[c] += a[(r, n)] * f64::from(ink[c]);
                }
            }
            rgb.map(to_byte)
        })
        .collect();
    Ok(ppm(w, h, &pixels))
}

pub fn write_abundance_ppm(a: &Matrix, w: usize, h: usize, path: &Path) -> Result<()> {
    write_text(path, &abundance_ppm(a, w, h)?)
}

fn gray_ppm(values: &[f64], scale: f64, w: usize, h: usize) -> String {
    let pixels: Vec<[u8; 3]> = values
        .iter()
        .map(|&v| {
            let g = if scale > 0.0 {
                to_byte(v / scale * 255.0)
            } else {
                0
            };
            [g; 3]
        })
        .collect();
    ppm(w, h, &pixels)
}

/// Grayscale map of per-pixel abundance error `||a_n - a_hat_n||`, with the
/// largest error at 255.
pub fn error_ppm(a_true: &Matrix, a_est: &Matrix, w: usize, h: usize) -> Result<String> {
    if a_true.shape() != a_est.shape() {
        return Err(Error::Shape {
            op: "error_ppm",
            left: a_true.shape(),
            right: a_est.shape(),
        });
    }
    check_image(a_true.cols(), w, h)?;
    let err: Vec<f64> = (0..a_true.cols())
        .map(|n| {
            (0..a_true.rows())
                .map(|k| (a_true[(k, n)] - a_est[(k, n)]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let max = err.iter().copied().fold(0.0, f64::max);
    Ok(gray_ppm(&err, max, w, h))
}

pub fn write_error_ppm(
    a_true: &Matrix,
    a_est: &Matrix,
    w: usize,
    h: usize,
    path: &Path,
) -> Result<()> {
    write_text(path, &error_ppm(a_true, a_est, w, h)?)
}

/// Grayscale guidance map; `0.5` renders as 255.
pub fn guidance_ppm(hmap: &GuidanceMap, w: usize, h: usize) -> Result<String> {
    check_image(hmap.len(), w, h)?;
    Ok(gray_ppm(hmap.values(), 0.5, w, h))
}

pub fn write_guidance_ppm(hmap: &GuidanceMap, w: usize, h: usize, path: &Path) -> Result<()> {
    write_text(path, &guidance_ppm(hmap, w, h)?)
}

// ---------------------------------------------------------------- traces

pub fn trace_to_csv(trace: &SolveTrace) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.outer,
            r.inner,
            fmt_real(r.objective),
            fmt_real(r.loss),
            fmt_real(r.penalty),
            fmt_real(r.max_change)
        );
    }
    out
}

pub fn write_trace_csv(trace: &SolveTrace, path: &Path) -> Result<()> {
    write_text(path, &trace_to_csv(trace))
}

// ---------------------------------------------------------------- key-value

/// Ordered `key = value` document, one pair per line. Lines starting with
/// `#` and blank lines are ignored on read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a pair, replacing an earlier value for the same key in place.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut kv = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                parse_err(path, i + 1, format!("expected `key = value`, got {line:?}"))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(parse_err(path, i + 1, "empty key"));
            }
            if kv.get(k).is_some() {
                return Err(parse_err(path, i + 1, format!("duplicate key {k:?}")));
            }
            kv.entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.render())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(path, &read_text(path)?)
    }

    /// Looks up a required key, labelling a miss with the document path.
    pub fn require(&self, path: &Path, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| parse_err(path, 0, format!("missing key {key:?}")))
    }
}

// ---------------------------------------------------------------- reports

fn join_reals(v: &[f64]) -> String {
    v.iter().map(|&x| fmt_real(x)).collect::<Vec<_>>().join(" ")
}

pub fn report_to_kv(report: &EvalReport) -> KeyValues {
    let mut kv = KeyValues::new();
    kv.set("endmembers", report.sad.len())
        .set(
            "assignment",
            report
                .assignment
                .0
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" "),
        )
        .set("sad", join_reals(&report.sad))
        .set("rmse", join_reals(&report.rmse))
        .set("mean_sad", fmt_real(report.mean_sad))
        .set("mean_rmse", fmt_real(report.mean_rmse));
    kv
}

pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    report_to_kv(report).write(path)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let kv = KeyValues::read(path)?;
    let reals = |key: &str| -> Result<Vec<f64>> {
        kv.require(path, key)?
            .split_whitespace()
            .map(|t| parse_real(path, 0, t))
            .collect()
    };
    let k: usize = kv
        .require(path, "endmembers")?
        .parse()
        .map_err(|_| parse_err(path, 0, "bad endmember count"))?;
    let assignment = kv
        .require(path, "assignment")?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| parse_err(path, 0, format!("bad assignment entry {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (sad, rmse) = (reals("sad")?, reals("rmse")?);
    let mean_sad = parse_real(path, 0, kv.require(path, "mean_sad")?)?;
    let mean_rmse = parse_real(path, 0, kv.require(path, "mean_rmse")?)?;
    let assignment = Assignment(assignment);
    if assignment.0.len() != k || sad.len() != k || rmse.len() != k || !assignment.is_bijection() {
        return Err(parse_err(
            path,
            0,
            format!("report fields disagree with {k} endmembers"),
        ));
    }
    Ok(EvalReport {
        assignment,
        sad,
        rmse,
        mean_sad,
        mean_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn cube_header_and_rows() {
        let cube = parse_cube(p(), "HSC1 2 2 1\n1 2\n3 4\n").unwrap();
        assert_eq!((cube.channels(), cube.width(), cube.height()), (2, 2, 1));
        assert_eq!(cube.data().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn cube_parse_errors_name_the_line() {
        let e = parse_cube(p(), "HSC1 2 2 1\n1 2\n3 4 5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        for bad in [
            "HSC2 1 1 1\n1\n",
            "HSC1 1 1\n1\n",
            "HSC1 1 1 1\n-1\n",
            "HSC1 1 1 1\nNaN\n",
            "HSC1 2 1 1\n1\n",
        ] {
            assert!(parse_cube(p(), bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn cube_round_trip_is_exact() {
        let data = Matrix::from_fn(3, 6, |r, c| (r as f64 + 0.1).powf(c as f64 * 0.37) / 7.0);
        let cube = SpectralCube::new(3, 2, data).unwrap();
        let back = parse_cube(p(), &cube_to_string(&cube)).unwrap();
        assert_eq!(back.data(), cube.data());
    }

    #[test]
    fn csv_examples() {
        let m = parse_matrix_csv(p(), "1,2\n3,4").unwrap();
        assert_eq!(
            m,
            Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
        );
        assert!(parse_matrix_csv(p(), "1,2\n3\n").is_err());
        assert!(parse_matrix_csv(p(), "").is_err());
    }

    #[test]
    fn abundance_palette_examples() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 0.5, 0.0]]).unwrap();
        let img = abundance_ppm(&a, 3, 1).unwrap();
        assert_eq!(img, "P3\n3 1\n255\n255 0 0 128 0 128 0 0 0\n");
        assert!(abundance_ppm(&Matrix::zeros(9, 1), 1, 1).is_err());
        assert!(abundance_ppm(&Matrix::zeros(2, 4), 3, 1).is_err());
    }

    #[test]
    fn error_image_scaling() {
        let t = Matrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.5]]).unwrap();
        assert_eq!(
            error_ppm(&t, &t, 3, 1).unwrap(),
            "P3\n3 1\n255\n0 0 0 0 0 0 0 0 0\n"
        );
        let mut e = t.clone();
        e[(0, 1)] = 0.3;
        assert_eq!(
            error_ppm(&t, &e, 3, 1).unwrap(),
            "P3\n3 1\n255\n0 0 0 255 255 255 0 0 0\n"
        );
    }

    #[test]
    fn guidance_gray_levels() {
        let h = GuidanceMap::rescaled(vec![0.0, 0.25, 0.5, 0.1]).unwrap();
        assert_eq!(
            guidance_ppm(&h, 2, 2).unwrap(),
            "P3\n2 2\n255\n0 0 0 128 128 128\n255 255 255 51 51 51\n"
        );
    }

    #[test]
    fn key_values_parse_and_reject() {
        let kv = KeyValues::parse(p(), "# c\na = 1\n\nb= x y \n").unwrap();
        assert_eq!(kv.get("a"), Some("1"));
        assert_eq!(kv.get("b"), Some("x y"));
        assert_eq!(KeyValues::parse(p(), &kv.render()).unwrap(), kv);
        assert!(KeyValues::parse(p(), "novalue\n").is_err());
        assert!(KeyValues::parse(p(), "a = 1\na = 2\n").is_err());
    }
}
