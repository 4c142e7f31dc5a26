//! Output files: CSV tables and gnuplot scripts that read them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use retrofit_core::lti::StateSpace;

use crate::CliError;

/// Destination directory; every file lands atomically via a rename.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Write { path: root.to_path_buf(), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.partial"));
        let fail = |source| CliError::Write { path: path.clone(), source };
        fs::write(&tmp, contents).map_err(fail)?;
        fs::rename(&tmp, &path).map_err(fail)?;
        Ok(path)
    }
}

/// `quantity,value` table.
pub fn key_values(rows: &[(&str, String)]) -> String {
    let mut out = String::from("quantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Long-format realization `block,row,col,value` for blocks `a`, `b`, `c`, `d`.
pub fn state_space_csv(sys: &StateSpace) -> String {
    let mut out = String::from("block,row,col,value\n");
    for (name, m) in [("a", &sys.a), ("b", &sys.b), ("c", &sys.c), ("d", &sys.d)] {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let _ = writeln!(out, "{name},{i},{j},{:.17e}", m[(i, j)]);
            }
        }
    }
    out
}

pub fn omega_plot(csv: &str, generators: usize, title: &str) -> String {
    let mut out = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't [s]'\nset ylabel 'frequency deviation'\nset title '{title}'\nplot "
    );
    let series: Vec<String> = (0..generators).map(|i| format!("'{csv}' using 1:{} with lines", i + 2)).collect();
    out.push_str(&series.join(", \\\n     "));
    out.push('\n');
    out
}

pub fn penetration_plot(csv: &str) -> String {
    format!(
        "set datafile separator ','\nset xlabel 'modules implemented'\nset ylabel 'L2 norm of the faulted generator frequency'\n\
         set key title 'fault bus'\nplot for [b in system(\"tail -n +2 {csv} | cut -d, -f1 | sort -un\")] \\\n     \
         '{csv}' using ($1 == b ? $3 : 1/0):4 with linespoints title b\n"
    )
}

pub fn nyquist_plot(csv: &str, cases: &[String]) -> String {
    let mut out = String::from(
        "set datafile separator ','\nset xlabel 'Re'\nset ylabel 'Im'\nset size ratio -1\nset title 'AGC loop locus'\nplot ",
    );
    let series: Vec<String> = cases
        .iter()
        .map(|c| format!("'{csv}' using (strcol(1) eq '{c}' ? $3 : 1/0):4 with lines title '{c}'"))
        .collect();
    out.push_str(&series.join(", \\\n     "));
    out.push('\n');
    out
}
