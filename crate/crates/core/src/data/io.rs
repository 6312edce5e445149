//! Dataset directories: one binary PGM (`P5`) per image plus `labels.csv`
//! with header `id,angle_rad`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{DataError, LabeledImage};
use crate::angle::{wrap, Angle};

pub const LABELS_FILE: &str = "labels.csv";

fn parse_err(file: &Path, offset: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { file: file.to_path_buf(), offset: offset as u64, message: message.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

/// Parses an 8-bit binary PGM into row-major values in `[0, 1]`.
/// `file` is only used in error messages.
pub fn read_pgm(bytes: &[u8], file: &Path) -> Result<(usize, usize, Vec<f64>), DataError> {
    if !bytes.starts_with(b"P5") {
        return Err(parse_err(file, 0, "not a binary PGM (expected P5 magic)"));
    }
    let mut pos = 2;
    let mut field = |name: &str| -> Result<usize, DataError> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(file, start, format!("expected {name}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(parse_err(file, pos, format!("unsupported maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(parse_err(file, pos, "empty image"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(parse_err(file, pos, "expected whitespace before pixel data"));
    }
    pos += 1;
    let data = &bytes[pos..];
    if data.len() != width * height {
        return Err(parse_err(file, pos, format!("expected {} pixel bytes, found {}", width * height, data.len())));
    }
    if let Some(i) = data.iter().position(|&b| b as usize > maxval) {
        return Err(parse_err(file, pos + i, format!("pixel exceeds maxval {maxval}")));
    }
    let scale = maxval as f64;
    Ok((width, height, data.iter().map(|&b| b as f64 / scale).collect()))
}

/// Encodes a square image as `P5` with maxval 255 and `round(255 * v)`.
pub fn write_pgm(pixels: &[f64], size: usize) -> Vec<u8> {
    let mut out = format!("P5\n{size} {size}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

fn image_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.pgm"))
}

fn check_id(id: &str) -> Result<(), DataError> {
    if id.is_empty() || id.contains(['/', '\\', ',', '"', '\n', '\r']) || id.starts_with('.') {
        return Err(DataError::Config(format!("id {id:?} cannot be used as a file name")));
    }
    Ok(())
}

/// Writes every image and `labels.csv` into `dir`, creating it if needed.
/// Angles are written in shortest round-trip form, so they reload exactly.
pub fn save_dataset(dir: impl AsRef<Path>, images: &[LabeledImage]) -> Result<(), DataError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for img in images {
        check_id(&img.id)?;
        let path = image_path(dir, &img.id);
        fs::write(&path, write_pgm(&img.pixels, img.size)).map_err(io_err(&path))?;
    }
    let path = dir.join(LABELS_FILE);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)
        .map_err(|e| parse_err(&path, 0, e.to_string()))?;
    let csv_err = |e: csv::Error| parse_err(&path, 0, e.to_string());
    w.write_record(["id", "angle_rad"]).map_err(csv_err)?;
    for img in images {
        w.write_record([img.id.as_str(), &img.label.radians().to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

/// Reads a directory written by [`save_dataset`]. Angles outside
/// `[0, 2π)` are wrapped with a warning.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<LabeledImage>, DataError> {
    let dir = dir.as_ref();
    let path = dir.join(LABELS_FILE);
    let bytes = fs::read(&path).map_err(|e| parse_err(&path, 0, format!("cannot read labels: {e}")))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let header = reader.headers().map_err(|e| parse_err(&path, 0, e.to_string()))?;
    if header != vec!["id", "angle_rad"] {
        return Err(parse_err(&path, 0, "header must be `id,angle_rad`"));
    }

    let mut images = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte() as usize);
            parse_err(&path, offset, e.to_string())
        })?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        if record.len() != 2 {
            return Err(parse_err(&path, offset, format!("expected 2 fields, found {}", record.len())));
        }
        let id = &record[0];
        check_id(id).map_err(|e| parse_err(&path, offset, e.to_string()))?;
        let raw: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(&path, offset, format!("bad angle {:?}", &record[1])))?;
        let label = match Angle::new(raw) {
            Ok(a) => a,
            Err(_) => {
                let wrapped = wrap(raw).map_err(|e| parse_err(&path, offset, e.to_string()))?;
                log::warn!("{}: label {raw} for {id} is outside [0, 2pi), wrapped to {}", path.display(), wrapped.radians());
                wrapped
            }
        };

        let img_path = image_path(dir, id);
        let data = fs::read(&img_path).map_err(|e| parse_err(&img_path, 0, format!("cannot read image: {e}")))?;
        let (w, h, pixels) = read_pgm(&data, &img_path)?;
        if w != h {
            return Err(parse_err(&img_path, 0, format!("image is {w}x{h}, expected square")));
        }
        if let Some(first) = images.first().map(|i: &LabeledImage| i.size) {
            if first != w {
                return Err(parse_err(&img_path, 0, format!("image is {w}x{w}, dataset uses {first}x{first}")));
            }
        }
        images.push(LabeledImage { id: id.to_string(), size: w, pixels, label });
    }
    Ok(images)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_dataset;

    #[test]
    fn pgm_round_trip() {
        let pixels: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
        let bytes = write_pgm(&pixels, 4);
        let (w, h, back) = read_pgm(&bytes, Path::new("x.pgm")).unwrap();
        assert_eq!((w, h), (4, 4));
        for (a, b) in pixels.iter().zip(&back) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_comments_and_maxval() {
        let mut bytes = b"P5 # c\n2 # w\n1\n# m\n100\n".to_vec();
        bytes.extend([0, 100]);
        let (_, _, p) = read_pgm(&bytes, Path::new("c.pgm")).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
    }

    #[test]
    fn pgm_errors_carry_offsets() {
        let err = |b: &[u8]| match read_pgm(b, Path::new("bad.pgm")) {
            Err(DataError::Parse { offset, .. }) => offset,
            other => panic!("{other:?}"),
        };
        assert_eq!(err(b"P2\n1 1\n255\n0"), 0);
        assert_eq!(err(b"P5\n1 x\n255\n\0"), 5);
        assert_eq!(err(b"P5\n2 2\n255\n\0\0"), 11);
        assert_eq!(err(b"P5\n1 1\n300\n\0"), 10);
        let msg = read_pgm(b"P5\n1 1\n255\n", Path::new("dir/bad.pgm")).unwrap_err().to_string();
        assert!(msg.contains("dir/bad.pgm") && msg.contains("byte 11"), "{msg}");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let images = generate_dataset(10, 32, 3).unwrap();
        save_dataset(dir.path(), &images).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in images.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label.radians().to_bits(), b.label.radians().to_bits());
            assert!(a.pixels.iter().zip(&b.pixels).all(|(x, y)| (x - y).abs() <= 1.0 / 255.0));
        }
        let text = fs::read_to_string(dir.path().join(LABELS_FILE)).unwrap();
        assert!(text.starts_with("id,angle_rad\ncell_00000,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn missing_labels_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(DataError::Parse { .. })));
    }

    #[test]
    fn out_of_range_label_is_wrapped() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), write_pgm(&[0.5; 4], 2)).unwrap();
        fs::write(dir.path().join(LABELS_FILE), "id,angle_rad\na,6.3\n").unwrap();
        let imgs = load_dataset(dir.path()).unwrap();
        assert!((imgs[0].label.radians() - (6.3 - std::f64::consts::TAU)).abs() < 1e-15);
    }

    #[test]
    fn malformed_csv_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), write_pgm(&[0.5; 4], 2)).unwrap();
        fs::write(dir.path().join(LABELS_FILE), "id,angle_rad\na,0.5\na,north\n").unwrap();
        match load_dataset(dir.path()) {
            Err(DataError::Parse { file, offset, .. }) => {
                assert!(file.ends_with(LABELS_FILE));
                assert_eq!(offset, 19);
            }
            other => panic!("{other:?}"),
        }
    }
}
