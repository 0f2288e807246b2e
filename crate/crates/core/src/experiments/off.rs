//! OFF mesh ingestion. Only the vertices are kept.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geograph::{CloudSource, PointCloud};
use crate::{Error, Result};

/// Loads the vertices of an OFF file as a cloud in `R^3`.
///
/// Blank lines and `#` comments are skipped. The counts may share the
/// header line (`OFF 8 6 0`, or the run-together `OFF8 6 0` some exporters
/// write).
pub fn off_load(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    off_parse(&text, path)
}

/// [`off_load`] followed by uniform subsampling without replacement to at
/// most `n` points. The kept points stay in file order.
pub fn off_load_subsampled(path: &Path, n: usize, seed: u64) -> Result<PointCloud> {
    let cloud = off_load(path)?;
    subsample(&cloud, n, seed)
}

pub fn subsample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid("cannot subsample to 0 points"));
    }
    if n >= cloud.len() {
        return Ok(cloud.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, cloud.len(), n).into_vec();
    idx.sort_unstable();
    let coords: Vec<f64> = idx.iter().flat_map(|&i| cloud.point(i).iter().copied()).collect();
    PointCloud::new(coords, cloud.dim(), cloud.source())
}

pub fn off_parse(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let header_err = |line: usize, msg: &str| Error::OffHeader { path: path.to_path_buf(), line, msg: msg.to_string() };

    let (hline, head) = lines.next().ok_or_else(|| header_err(1, "empty file"))?;
    let rest = head.strip_prefix("OFF").ok_or_else(|| header_err(hline, "first line must be `OFF`"))?;
    let (cline, counts) = if rest.trim().is_empty() {
        lines.next().ok_or_else(|| header_err(hline + 1, "missing counts line"))?
    } else {
        (hline, rest.trim())
    };
    let counts: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| header_err(cline, "counts must be non-negative integers"))?;
    if counts.len() < 2 || counts.len() > 3 {
        return Err(header_err(cline, "counts line must be `V F E`"));
    }
    let v = counts[0];

    let mut coords = Vec::with_capacity(3 * v);
    let mut last = cline;
    for found in 0..v {
        let Some((lno, line)) = lines.next() else {
            return Err(Error::OffCountMismatch {
                path: path.to_path_buf(),
                line: text.lines().count() + 1,
                expected: v,
                found,
            });
        };
        last = lno;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(Error::OffNonNumeric { path: path.to_path_buf(), line: lno, token: line.to_string() });
        }
        for t in &toks[..3] {
            let x: f64 = t
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::OffNonNumeric { path: path.to_path_buf(), line: lno, token: t.to_string() })?;
            coords.push(x);
        }
    }
    if v == 0 {
        return Err(Error::OffCountMismatch { path: path.to_path_buf(), line: last, expected: 0, found: 0 });
    }
    PointCloud::new(coords, 3, CloudSource::External)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<PointCloud> {
        off_parse(s, Path::new("t.off"))
    }

    #[test]
    fn sample_file() {
        let c = parse("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.point(1), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_file_is_header_error() {
        assert!(matches!(parse(""), Err(Error::OffHeader { line: 1, .. })));
    }

    #[test]
    fn short_file_reports_line() {
        match parse("OFF\n4 0 0\n0 0 0\n1 0 0\n0 1 0\n") {
            Err(Error::OffCountMismatch { line, expected, found, .. }) => {
                assert_eq!((line, expected, found), (6, 4, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_numeric_reports_line_and_token() {
        match parse("OFF\n2 0 0\n0 0 0\n1 x 0\n") {
            Err(Error::OffNonNumeric { line, token, .. }) => assert_eq!((line, token.as_str()), (4, "x")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_variants() {
        assert_eq!(parse("OFF 2 1 0\n0 0 0\n1 1 1\n3 0 1 0\n").unwrap().len(), 2);
        assert_eq!(parse("OFF2 0 0\n0 0 0\n1 1 1\n").unwrap().len(), 2);
        assert_eq!(parse("# mesh\n\nOFF\n# counts\n1 0 0\n0.5 0.5 0.5 # v\n").unwrap().len(), 1);
        assert!(matches!(parse("PLY\n"), Err(Error::OffHeader { line: 1, .. })));
        assert!(matches!(parse("OFF\na b c\n"), Err(Error::OffHeader { line: 2, .. })));
    }

    #[test]
    fn subsampling() {
        let coords: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let c = PointCloud::new(coords, 3, CloudSource::External).unwrap();
        let s = subsample(&c, 4, 7).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s, subsample(&c, 4, 7).unwrap());
        let firsts: Vec<f64> = s.points().map(|p| p[0]).collect();
        assert!(firsts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(&c, 50, 0).unwrap().len(), 10);
    }
}
