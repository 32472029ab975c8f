//! Configuration files, run manifests, the `LQG1` field format and CSV
//! output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qg3_core::config::CONFIG_KEYS;
use qg3_core::rng::STREAM_DERIVATION;
use qg3_core::{Error, LayerField, Representation, Result, SimConfig, NUM_LAYERS};
use sha2::{Digest, Sha256};

/// Parses the flat `key=value` format. `#` starts a comment; blank lines
/// are ignored; missing keys keep their defaults. The result is validated.
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    let mut config = SimConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut unknown: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse {
                line,
                message: format!("expected key=value, found '{content}'"),
            });
        };
        let key = key.trim();
        let Some(known) = CONFIG_KEYS.iter().find(|k| **k == key) else {
            unknown.push((line, key.to_string()));
            continue;
        };
        if seen.contains(known) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        seen.push(known);
        config
            .set(key, value)
            .map_err(|message| Error::Parse { line, message })?;
    }
    if let Some((line, _)) = unknown.first() {
        let list: Vec<String> = unknown.iter().map(|(l, k)| format!("'{k}' (line {l})")).collect();
        return Err(Error::Parse {
            line: *line,
            message: format!("unknown keys: {}", list.join(", ")),
        });
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> Result<SimConfig> {
    parse_config_str(&fs::read_to_string(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to replay a run: the resolved configuration (which is
/// itself a valid config file), the command and its parameters, and the
/// checksum of every artifact written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: SimConfig,
    pub params: Vec<(String, String)>,
    pub artifacts: Vec<(String, String)>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl RunManifest {
    pub fn new(command: &str, config: &SimConfig) -> Self {
        Self {
            command: command.to_string(),
            config: config.clone(),
            params: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.params.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# qg3 manifest").unwrap();
        writeln!(out, "# version={}", env!("CARGO_PKG_VERSION")).unwrap();
        writeln!(out, "# command={}", self.command).unwrap();
        writeln!(out, "# master_seed={}", self.config.seed).unwrap();
        writeln!(out, "# streams={STREAM_DERIVATION}").unwrap();
        for (k, v) in &self.params {
            writeln!(out, "# param {k}={v}").unwrap();
        }
        for (name, sum) in &self.artifacts {
            writeln!(out, "# artifact {name} sha256={sum}").unwrap();
        }
        out.push_str(&self.config.echo());
        out
    }
}

/// Writes artifacts into one directory and remembers their checksums.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, manifest: RunManifest) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest_mut(&mut self) -> &mut RunManifest {
        &mut self.manifest
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.manifest
            .artifacts
            .push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Writes the manifest last, so it lists every artifact.
    pub fn finish(self) -> Result<RunManifest> {
        fs::write(self.dir.join(MANIFEST_NAME), self.manifest.render())?;
        Ok(self.manifest)
    }
}

pub const FIELD_MAGIC: &[u8; 4] = b"LQG1";
pub const FIELD_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 5 * 4;

/// `LQG1` encoding: magic, then little-endian `u32` version, `Nx`, `Ny`,
/// layer count and representation flag, then each layer's values row-major
/// as little-endian `f64`.
pub fn encode_field(field: &LayerField) -> Vec<u8> {
    let (nx, ny) = field.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + NUM_LAYERS * nx * ny * 8);
    out.extend_from_slice(FIELD_MAGIC);
    for v in [
        FIELD_VERSION,
        nx as u32,
        ny as u32,
        NUM_LAYERS as u32,
        field.repr().flag(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in field.layers() {
        for v in layer.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<LayerField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != FIELD_MAGIC {
        return Err(Error::Format("bad magic bytes, expected LQG1".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let (nx, ny, layers) = (word(1) as usize, word(2) as usize, word(3) as usize);
    if layers != NUM_LAYERS {
        return Err(Error::Format(format!("expected 3 layers, found {layers}")));
    }
    let repr = Representation::from_flag(word(4))
        .ok_or_else(|| Error::Format(format!("unknown representation flag {}", word(4))))?;
    let expected = nx
        .checked_mul(ny)
        .and_then(|n| n.checked_mul(NUM_LAYERS * 8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("declared shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layers: Vec<_> = values
        .chunks_exact(nx * ny)
        .map(|c| ndarray::Array2::from_shape_vec((nx, ny), c.to_vec()).expect("length checked"))
        .collect();
    let layers: [_; NUM_LAYERS] = layers.try_into().expect("three layers");
    LayerField::new(repr, layers)
}

pub fn write_field(path: &Path, field: &LayerField) -> Result<()> {
    fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<LayerField> {
    decode_field(&fs::read(path)?)
}

/// Formats a float with 17 significant digits; non-finite values are an
/// error naming `column`.
pub fn number(v: f64, column: &str) -> Result<String> {
    if v.is_finite() {
        Ok(format!("{v:.16e}"))
    } else {
        Err(Error::Format(format!("non-finite value {v} in column '{column}'")))
    }
}

/// Comma-separated table with a header row. Cells are already formatted.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    body: String,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|h| h.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    /// Row of numbers, each checked against its column name.
    pub fn numbers(&mut self, values: &[f64]) -> Result<()> {
        let cells = values
            .iter()
            .zip(&self.header)
            .map(|(v, h)| number(*v, h))
            .collect::<Result<Vec<_>>>()?;
        self.row(cells);
        Ok(())
    }

    pub fn render(&self) -> String {
        format!("{}\n{}", self.header.join(","), self.body)
    }
}

/// `time` followed by one column per recorded observable.
pub fn series_csv(times: &[f64], names: &[String], series: &[Vec<f64>]) -> Result<String> {
    let mut header = vec!["time".to_string()];
    header.extend(names.iter().cloned());
    let mut t = Table::new(&header);
    for (i, time) in times.iter().enumerate() {
        let mut row = vec![*time];
        row.extend(series.iter().map(|s| s[i]));
        t.numbers(&row)?;
    }
    Ok(t.render())
}

#[cfg(test)]
mod tests {
    use super::*;
    use qg3_core::{InitialDatum, SpectralBasis};

    #[test]
    fn config_lines_and_defaults() {
        let c = parse_config_str("gamma=0.5\n").unwrap();
        assert_eq!(c.gamma, 0.5);
        assert_eq!(parse_config_str("").unwrap(), SimConfig::default());
        let c = parse_config_str("# comment\n\n nx = 16 # trailing\nny=8\n").unwrap();
        assert_eq!((c.nx, c.ny), (16, 8));
    }

    #[test]
    fn config_errors() {
        match parse_config_str("gamma=-1") {
            Err(Error::Config(m)) => assert!(m.contains("gamma must be positive")),
            other => panic!("{other:?}"),
        }
        match parse_config_str("nx=8\nfoo=1\nbar=2") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("'foo'") && message.contains("'bar'"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config_str("nx=8\ngamma"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_config_str("dt=abc"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config_str("nx=8\nnx=9"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            parse_config_str("dt=2"),
            Err(Error::StabilityCeiling { .. })
        ));
        assert!(matches!(parse_config_str("nx=8\ngx=10"), Err(Error::Config(_))));
    }

    #[test]
    fn manifest_replays_to_same_config() {
        let cfg = SimConfig {
            gamma: 0.25,
            seed: 11,
            initial: InitialDatum::Random {
                seed: 3,
                amplitude: 0.5,
                max_mode: 4,
            },
            ..SimConfig::default()
        };
        let mut m = RunManifest::new("run", &cfg);
        m.param("threads", 8);
        m.artifacts.push(("series.csv".into(), "00".into()));
        let text = m.render();
        let back = parse_config_str(&text).unwrap();
        assert_eq!(back.echo(), cfg.echo());
        assert!(text.contains("# artifact series.csv sha256=00"));
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let basis = SpectralBasis::with_default_grid(1.0, 2.0, 6, 5).unwrap();
        let f = InitialDatum::Random {
            seed: 8,
            amplitude: 1.0,
            max_mode: 5,
        }
        .build(&basis)
        .unwrap();
        for field in [f.clone(), basis.to_grid(&f).unwrap()] {
            let bytes = encode_field(&field);
            let back = decode_field(&bytes).unwrap();
            assert_eq!(back.repr(), field.repr());
            for l in 0..NUM_LAYERS {
                for (a, b) in back.layer(l).iter().zip(field.layer(l)) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.lqg");
        write_field(&path, &f).unwrap();
        assert_eq!(read_field(&path).unwrap(), f);
    }

    #[test]
    fn field_format_errors() {
        let basis = SpectralBasis::with_default_grid(1.0, 1.0, 4, 4).unwrap();
        let bytes = encode_field(&basis.zeros());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_field(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_field(&bad), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[8] = 5; // Nx = 5 with a payload for 4
        assert!(matches!(decode_field(&bad), Err(Error::Length { .. })));
        assert!(matches!(
            decode_field(&bytes[..bytes.len() - 3]),
            Err(Error::Length { .. })
        ));
    }

    #[test]
    fn csv_numbers_round_trip() {
        let v = [0.1, -1.0 / 3.0, 1e-300, 6.02e23];
        for x in v {
            assert_eq!(number(x, "x").unwrap().parse::<f64>().unwrap(), x);
        }
        assert!(matches!(number(f64::NAN, "x"), Err(Error::Format(_))));
        let csv = series_csv(&[0.0, 0.5], &["a".into()], &[vec![1.0, 2.0]]).unwrap();
        assert_eq!(csv.lines().next(), Some("time,a"));
        assert_eq!(csv.lines().count(), 3);
        assert!(series_csv(&[0.0], &["a".into()], &[vec![f64::INFINITY]]).is_err());
    }
}
