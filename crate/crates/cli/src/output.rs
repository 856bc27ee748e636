//! CSV and text artifacts. Floats are written with 17 significant digits
//! in scientific notation so that reruns diff cleanly.

use crate::CliError;
use std::fs;
use std::path::{Path, PathBuf};
use tsdyn::{CMat, CVec};

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("cannot create {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str, header: &[String]) -> Result<Csv, CliError> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        self.written.push(name.to_string());
        Ok(Csv { w })
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        fs::write(self.path(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

pub struct Csv {
    w: csv::Writer<fs::File>,
}

impl Csv {
    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.w.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.w.flush()?;
        Ok(())
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `prefix1_re, prefix1_im, …` for an `n`-vector.
pub fn vector_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).flat_map(|k| [format!("{prefix}{k}_re"), format!("{prefix}{k}_im")]).collect()
}

pub fn vector_fields(v: &CVec) -> Vec<String> {
    v.iter().flat_map(|z| [num(z.re), num(z.im)]).collect()
}

/// Row-major `a_ij_re, a_ij_im` columns of an `n×n` matrix.
pub fn matrix_header(prefix: &str, n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|i| (1..=n).flat_map(move |j| [format!("{prefix}{i}{j}_re"), format!("{prefix}{i}{j}_im")]))
        .collect()
}

pub fn matrix_fields(m: &CMat) -> Vec<String> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(num(m[(i, j)].re));
            out.push(num(m[(i, j)].im));
        }
    }
    out
}
