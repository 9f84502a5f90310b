//! JSON model files: `sigma_x`, `b`, `sigma_v`, `w_e`, `w_d` as row-major
//! `k×k` arrays, plus optional `modalities` (`[{h, r}]`) and `label`.

use std::path::Path;

use nalgebra::DMatrix;
use serde_json::{Map, Value};

use semrd_core::{Modality, ModalityStack, SemanticModel, SpdMatrix};

use crate::error::{CliError, CliResult};

const MATRIX_KEYS: [&str; 5] = ["sigma_x", "b", "sigma_v", "w_e", "w_d"];

#[derive(Debug, Clone)]
pub struct ModelFile {
    pub label: Option<String>,
    pub model: SemanticModel,
    pub modalities: Option<ModalityStack>,
}

pub fn load(path: &Path) -> CliResult<ModelFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read model file {}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> CliResult<ModelFile> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("model file is not valid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| CliError::Input("model file must be a JSON object".into()))?;

    let mut mats = Vec::with_capacity(MATRIX_KEYS.len());
    for key in MATRIX_KEYS {
        let v = obj
            .get(key)
            .ok_or_else(|| CliError::Input(format!("{key}: missing key")))?;
        mats.push(matrix(v, key)?);
    }
    let k = mats[0].nrows();
    for (key, m) in MATRIX_KEYS.iter().zip(&mats) {
        if m.nrows() != m.ncols() || m.nrows() != k {
            return Err(CliError::Input(format!(
                "{key}: expected a {k}x{k} matrix, found {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    let [sigma_x, b, sigma_v, w_e, w_d]: [DMatrix<f64>; 5] = mats.try_into().expect("five matrices");
    let model = SemanticModel::from_raw(sigma_x, b, sigma_v, w_e, w_d).map_err(|e| CliError::Input(e.to_string()))?;

    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(CliError::Input("label: expected a string".into())),
    };
    let modalities = match obj.get("modalities") {
        None | Some(Value::Null) => None,
        Some(v) => Some(modalities(v, k)?),
    };
    Ok(ModelFile {
        label,
        model,
        modalities,
    })
}

fn modalities(v: &Value, k: usize) -> CliResult<ModalityStack> {
    let list = v
        .as_array()
        .ok_or_else(|| CliError::Input("modalities: expected a list of {h, r} objects".into()))?;
    let mut out = Vec::with_capacity(list.len());
    for (i, item) in list.iter().enumerate() {
        let at = |field: &str| format!("modalities[{i}].{field}");
        let obj: &Map<String, Value> = item
            .as_object()
            .ok_or_else(|| CliError::Input(format!("modalities[{i}]: expected an object with keys h and r")))?;
        let get = |field: &str| {
            obj.get(field)
                .ok_or_else(|| CliError::Input(format!("{}: missing key", at(field))))
        };
        let h = matrix(get("h")?, &at("h"))?;
        let r = matrix(get("r")?, &at("r"))?;
        if h.ncols() != k {
            return Err(CliError::Input(format!(
                "{}: expected {k} columns, found {}",
                at("h"),
                h.ncols()
            )));
        }
        let r = SpdMatrix::new(r).map_err(|e| CliError::Input(format!("{}: {e}", at("r"))))?;
        out.push(Modality::new(h, r).map_err(|e| CliError::Input(format!("modalities[{i}]: {e}")))?);
    }
    ModalityStack::new(k, out).map_err(|e| CliError::Input(format!("modalities: {e}")))
}

fn matrix(v: &Value, key: &str) -> CliResult<DMatrix<f64>> {
    let bad = |msg: String| CliError::Input(format!("{key}: {msg}"));
    let rows = v
        .as_array()
        .ok_or_else(|| bad("expected a row-major array of rows".into()))?;
    if rows.is_empty() {
        return Err(bad("matrix has no rows".into()));
    }
    let mut data = Vec::new();
    let mut width = None;
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| bad(format!("row {i} is not an array")))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(bad(format!("row {i} has {} entries, expected {}", row.len(), width.unwrap())));
        }
        for (j, x) in row.iter().enumerate() {
            data.push(x.as_f64().ok_or_else(|| bad(format!("entry ({i}, {j}) is not a number")))?);
        }
    }
    let width = width.unwrap_or(0);
    if width == 0 {
        return Err(bad("matrix has no columns".into()));
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &data))
}
