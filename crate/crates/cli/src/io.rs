//! File formats shared by the pipeline stages.
//!
//! Regions arrive as a GeoJSON FeatureCollection (Polygon, MultiPolygon,
//! or Point geometries; properties carry `id` and optional `group`) or as
//! a CSV with columns `id,x,y[,group]`. Graphs travel as edge-list CSVs
//! with header `src,dst` over region ids. Node-level tables (features,
//! targets, encodings, location embeddings, predictions) are CSVs whose
//! first column is `id`. Checkpoints and summaries are JSON. All writes
//! go through a write-temp-then-rename so a crashed run never leaves a
//! half-written artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use sgnn_core::features::{FeatureTable, TargetVector};
use sgnn_core::graph::{Point, Region, RegionGraph};
use sgnn_core::linalg::Mat;
use sgnn_core::nn::{
    Activation, Architecture, EpochLog, ModelSpec, Optimizer, Param, TrainedModel,
};

use crate::errors::{CliError, Result};

// ---------------------------------------------------------------------------
// low-level helpers
// ---------------------------------------------------------------------------

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

/// Write atomically: a temp file in the target directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::input(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|f| f.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| CliError::input(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::input(path, e))?;
    Ok(())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::input(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

fn json_bytes(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("json serialization");
    s.push('\n');
    s.into_bytes()
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    atomic_write(path, &json_bytes(value))
}

pub fn read_json(path: &Path) -> Result<Value> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| CliError::input(path, e))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().from_writer(Vec::new())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer();
    w.write_record(header).expect("csv header");
    for row in rows {
        w.write_record(row).expect("csv row");
    }
    atomic_write(path, &w.into_inner().expect("csv flush"))
}

/// Render a float the way serde_json does: shortest string that parses
/// back to the same bits, so CSV artifacts are byte-stable too.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // Display for f64 is shortest-roundtrip, matching the JSON artifacts
        format!("{v}")
    }
}

// ---------------------------------------------------------------------------
// regions
// ---------------------------------------------------------------------------

fn ring_from_json(ring: &Value, path: &Path) -> Result<Vec<Point>> {
    ring.as_array()
        .ok_or_else(|| CliError::input(path, "geometry ring is not an array"))?
        .iter()
        .map(|pt| {
            let coords = pt
                .as_array()
                .filter(|c| c.len() >= 2)
                .ok_or_else(|| CliError::input(path, "coordinate is not an [x, y] pair"))?;
            let x = coords[0]
                .as_f64()
                .ok_or_else(|| CliError::input(path, "non-numeric coordinate"))?;
            let y = coords[1]
                .as_f64()
                .ok_or_else(|| CliError::input(path, "non-numeric coordinate"))?;
            Ok((x, y))
        })
        .collect()
}

/// Vertex-average centroid over the outer ring, skipping the closing
/// duplicate vertex.
fn ring_centroid(ring: &[Point]) -> Point {
    let mut pts = ring;
    if pts.len() > 1 && pts.first() == pts.last() {
        pts = &pts[..pts.len() - 1];
    }
    let n = pts.len().max(1) as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    (sx / n, sy / n)
}

fn region_from_feature(feature: &Value, path: &Path) -> Result<Region> {
    let props = &feature["properties"];
    let id = props["id"]
        .as_str()
        .map(str::to_string)
        .or_else(|| props["id"].as_i64().map(|v| v.to_string()))
        .ok_or_else(|| CliError::input(path, "feature is missing a string or integer property \"id\""))?;
    let group = props["group"].as_str().map(str::to_string);
    let geom = &feature["geometry"];
    let gtype = geom["type"].as_str().unwrap_or("");
    match gtype {
        "Point" => {
            let c = ring_from_json(&json!([geom["coordinates"].clone()]), path)?;
            Ok(Region {
                id,
                centroid: c[0],
                boundary: None,
                group,
            })
        }
        "Polygon" => {
            let rings: Vec<Vec<Point>> = geom["coordinates"]
                .as_array()
                .ok_or_else(|| CliError::input(path, "Polygon coordinates are not an array"))?
                .iter()
                .map(|r| ring_from_json(r, path))
                .collect::<Result<_>>()?;
            if rings.is_empty() {
                return Err(CliError::input(path, format!("region {id} has no rings")));
            }
            Ok(Region {
                id,
                centroid: ring_centroid(&rings[0]),
                boundary: Some(rings),
                group,
            })
        }
        "MultiPolygon" => {
            // flatten: all rings of all parts, centroid from the first
            // outer ring of the largest part (by vertex count)
            let polys = geom["coordinates"]
                .as_array()
                .ok_or_else(|| CliError::input(path, "MultiPolygon coordinates are not an array"))?;
            let mut rings: Vec<Vec<Point>> = Vec::new();
            let mut main: Option<Vec<Point>> = None;
            for poly in polys {
                let part: Vec<Vec<Point>> = poly
                    .as_array()
                    .ok_or_else(|| CliError::input(path, "MultiPolygon part is not an array"))?
                    .iter()
                    .map(|r| ring_from_json(r, path))
                    .collect::<Result<_>>()?;
                if let Some(outer) = part.first() {
                    if main.as_ref().map_or(true, |m| outer.len() > m.len()) {
                        main = Some(outer.clone());
                    }
                }
                rings.extend(part);
            }
            let main =
                main.ok_or_else(|| CliError::input(path, format!("region {id} has no rings")))?;
            Ok(Region {
                id,
                centroid: ring_centroid(&main),
                boundary: Some(rings),
                group,
            })
        }
        other => Err(CliError::input(
            path,
            format!("unsupported geometry type {other:?} for region {id}"),
        )),
    }
}

fn read_regions_geojson(path: &Path) -> Result<Vec<Region>> {
    let doc = read_json(path)?;
    let features = doc["features"]
        .as_array()
        .ok_or_else(|| CliError::input(path, "not a GeoJSON FeatureCollection"))?;
    features.iter().map(|f| region_from_feature(f, path)).collect()
}

fn read_regions_csv(path: &Path) -> Result<Vec<Region>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::input(path, e))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let (id_col, x_col, y_col) = match (find("id"), find("x"), find("y")) {
        (Some(i), Some(x), Some(y)) => (i, x, y),
        _ => return Err(CliError::input(path, "region CSV needs columns id,x,y")),
    };
    let group_col = find("group");
    let mut regions = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        let parse = |col: usize| -> Result<f64> {
            record[col]
                .trim()
                .parse()
                .map_err(|_| CliError::input(path, format!("non-numeric coordinate at row {row}")))
        };
        regions.push(Region {
            id: record[id_col].to_string(),
            centroid: (parse(x_col)?, parse(y_col)?),
            boundary: None,
            group: group_col
                .map(|g| record[g].trim())
                .filter(|g| !g.is_empty())
                .map(str::to_string),
        });
    }
    Ok(regions)
}

/// Dispatch on extension: .geojson/.json parse as GeoJSON, anything else
/// as the id,x,y[,group] CSV layout.
pub fn read_regions(path: &Path) -> Result<Vec<Region>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("geojson") | Some("json") => read_regions_geojson(path),
        _ => read_regions_csv(path),
    }
}

fn rings_to_json(rings: &[Vec<Point>]) -> Value {
    Value::Array(
        rings
            .iter()
            .map(|ring| {
                Value::Array(
                    ring.iter()
                        .map(|&(x, y)| json!([x, y]))
                        .collect(),
                )
            })
            .collect(),
    )
}

pub fn region_feature(region: &Region, extra: Value) -> Value {
    let mut props = json!({ "id": region.id });
    if let Some(g) = &region.group {
        props["group"] = json!(g);
    }
    if let Value::Object(map) = extra {
        for (k, v) in map {
            props[k] = v;
        }
    }
    let geometry = match &region.boundary {
        Some(rings) => json!({ "type": "Polygon", "coordinates": rings_to_json(rings) }),
        None => json!({
            "type": "Point",
            "coordinates": [region.centroid.0, region.centroid.1],
        }),
    };
    json!({ "type": "Feature", "properties": props, "geometry": geometry })
}

pub fn write_regions_geojson(path: &Path, regions: &[Region]) -> Result<()> {
    let features: Vec<Value> = regions.iter().map(|r| region_feature(r, json!({}))).collect();
    write_json(path, &json!({ "type": "FeatureCollection", "features": features }))
}

// ---------------------------------------------------------------------------
// edges
// ---------------------------------------------------------------------------

pub fn write_edges(path: &Path, graph: &RegionGraph) -> Result<()> {
    let rows: Vec<Vec<String>> = graph
        .edge_list()
        .iter()
        .map(|&(i, j)| vec![graph.regions[i].id.clone(), graph.regions[j].id.clone()])
        .collect();
    write_csv(path, &["src", "dst"], &rows)
}

/// Rebuild a graph from regions plus an edge-list CSV over region ids.
pub fn read_graph(regions: Vec<Region>, edges_path: &Path) -> Result<RegionGraph> {
    let mut index = BTreeMap::new();
    for (i, r) in regions.iter().enumerate() {
        index.insert(r.id.clone(), i);
    }
    let mut reader = csv::Reader::from_path(edges_path).map_err(|e| CliError::input(edges_path, e))?;
    let mut edges = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(edges_path, e))?;
        if record.len() < 2 {
            return Err(CliError::input(edges_path, "edge row needs src and dst"));
        }
        let lookup = |id: &str| -> Result<usize> {
            index.get(id).copied().ok_or_else(|| {
                CliError::input(edges_path, format!("edge endpoint {id:?} is not a known region"))
            })
        };
        edges.push((lookup(&record[0])?, lookup(&record[1])?));
    }
    Ok(RegionGraph::from_edges(regions, &edges))
}

// ---------------------------------------------------------------------------
// node-level tables
// ---------------------------------------------------------------------------

/// Parsed id-keyed numeric table: header names (after `id`) plus one row
/// of optional cells per record. Empty cells mean missing.
pub struct IdTable {
    pub ids: Vec<String>,
    pub column_names: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn read_id_table(path: &Path) -> Result<IdTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::input(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::input(path, e))?.clone();
    if headers.is_empty() || &headers[0] != "id" {
        return Err(CliError::input(path, "first column must be \"id\""));
    }
    let column_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(path, e))?;
        if record.len() != column_names.len() + 1 {
            return Err(CliError::input(path, format!("row {row} has the wrong width")));
        }
        ids.push(record[0].to_string());
        let parsed: Vec<Option<f64>> = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(j, cell)| {
                let cell = cell.trim();
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>().map(Some).map_err(|_| {
                        CliError::input(
                            path,
                            format!(
                                "non-numeric cell at row {row}, column {:?}",
                                column_names[j]
                            ),
                        )
                    })
                }
            })
            .collect::<Result<_>>()?;
        cells.push(parsed);
    }
    Ok(IdTable {
        ids,
        column_names,
        cells,
    })
}

/// Reorder table rows into graph node order; every region must have a row.
pub fn align_rows(table: &IdTable, graph: &RegionGraph, path: &Path) -> Result<Vec<Vec<Option<f64>>>> {
    let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, id) in table.ids.iter().enumerate() {
        by_id.insert(id, i);
    }
    graph
        .regions
        .iter()
        .map(|r| {
            by_id
                .get(r.id.as_str())
                .map(|&i| table.cells[i].clone())
                .ok_or_else(|| CliError::input(path, format!("no row for region id {:?}", r.id)))
        })
        .collect()
}

/// Feature table aligned to the graph, rows reordered by region id.
pub fn read_features(path: &Path, graph: &RegionGraph, fixed: &[String]) -> Result<FeatureTable> {
    let table = read_id_table(path)?;
    let cells = align_rows(&table, graph, path)?;
    let ids = graph.regions.iter().map(|r| r.id.clone()).collect();
    FeatureTable::new(ids, table.column_names, fixed, cells).map_err(CliError::from)
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut header: Vec<&str> = vec!["id"];
    for c in &table.columns {
        header.push(&c.name);
    }
    let rows: Vec<Vec<String>> = (0..table.n_rows())
        .map(|i| {
            let mut row = vec![table.region_ids[i].clone()];
            if table.row_mask[i] {
                row.extend(table.values.row(i).iter().map(|&v| fmt_f64(v)));
            } else {
                row.extend(std::iter::repeat(String::new()).take(table.n_cols()));
            }
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Target CSV: id plus exactly one outcome column; empty cells = missing.
pub fn read_target(path: &Path, graph: &RegionGraph) -> Result<TargetVector> {
    let table = read_id_table(path)?;
    if table.column_names.len() != 1 {
        return Err(CliError::input(path, "target CSV needs exactly one outcome column"));
    }
    let cells = align_rows(&table, graph, path)?;
    Ok(TargetVector::new(
        table.column_names[0].clone(),
        cells.into_iter().map(|row| row[0]).collect(),
    ))
}

pub fn write_target(path: &Path, target: &TargetVector, ids: &[String]) -> Result<()> {
    let rows: Vec<Vec<String>> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let cell = if target.mask[i] {
                fmt_f64(target.values[i])
            } else {
                String::new()
            };
            vec![id.clone(), cell]
        })
        .collect();
    write_csv(path, &["id", &target.outcome_name], &rows)
}

/// Location embeddings keyed by region id; rows must be complete.
pub fn read_location_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let table = read_id_table(path)?;
    let mut out = BTreeMap::new();
    for (i, id) in table.ids.iter().enumerate() {
        let row: Vec<f64> = table.cells[i]
            .iter()
            .map(|c| {
                c.ok_or_else(|| {
                    CliError::input(path, format!("embedding row for {id:?} has a missing cell"))
                })
            })
            .collect::<Result<_>>()?;
        out.insert(id.clone(), row);
    }
    Ok(out)
}

/// Matrix with named columns, id column first, aligned to graph order.
pub fn write_node_matrix(
    path: &Path,
    graph: &RegionGraph,
    names: &[String],
    values: &Mat,
) -> Result<()> {
    assert_eq!(values.rows, graph.node_count());
    assert_eq!(values.cols, names.len());
    let mut header: Vec<&str> = vec!["id"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..values.rows)
        .map(|i| {
            let mut row = vec![graph.regions[i].id.clone()];
            row.extend(values.row(i).iter().map(|&v| fmt_f64(v)));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Read a node matrix (e.g. an encodings export) aligned to graph order;
/// all cells must be present.
pub fn read_node_matrix(path: &Path, graph: &RegionGraph) -> Result<(Vec<String>, Mat)> {
    let table = read_id_table(path)?;
    let cells = align_rows(&table, graph, path)?;
    let cols = table.column_names.len();
    let mut m = Mat::zeros(graph.node_count(), cols);
    for (i, row) in cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            m[(i, j)] = cell.ok_or_else(|| {
                CliError::input(path, format!("missing cell for region {:?}", graph.regions[i].id))
            })?;
        }
    }
    Ok((table.column_names, m))
}

/// Fixed-control list: one column name per line, blank lines ignored.
pub fn read_fixed_list(path: &Path) -> Result<Vec<String>> {
    Ok(read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

// ---------------------------------------------------------------------------
// model checkpoint
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ParamJson {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpecJson {
    architecture: String,
    depth: usize,
    hidden1: usize,
    hidden2: usize,
    dropout: f64,
    activation: String,
    gin_epsilon_init: f64,
    gat_heads: usize,
    leaky_slope: f64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    spec: SpecJson,
    seed: u64,
    feature_columns: Vec<String>,
    params: Vec<ParamJson>,
}

fn activation_label(a: Activation) -> &'static str {
    match a {
        Activation::Relu => "relu",
        Activation::LeakyRelu => "leaky_relu",
        Activation::Identity => "identity",
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    match s {
        "relu" => Ok(Activation::Relu),
        "leaky_relu" => Ok(Activation::LeakyRelu),
        "identity" => Ok(Activation::Identity),
        _ => Err(CliError::config(format!("unknown activation {s:?}"))),
    }
}

pub fn parse_architecture(s: &str) -> Result<Architecture> {
    Architecture::parse(s)
        .ok_or_else(|| CliError::config(format!("unknown architecture {s:?} (gcn|gin|graphsage|gatv2)")))
}

pub fn parse_optimizer(s: &str) -> Result<Optimizer> {
    Optimizer::parse(s).ok_or_else(|| CliError::config(format!("unknown optimizer {s:?} (adam|sgd|rmsprop)")))
}

pub fn write_checkpoint(
    path: &Path,
    model: &TrainedModel,
    feature_columns: &[String],
) -> Result<()> {
    let spec = &model.spec;
    let doc = CheckpointJson {
        spec: SpecJson {
            architecture: spec.architecture.label().to_string(),
            depth: spec.depth,
            hidden1: spec.hidden1,
            hidden2: spec.hidden2,
            dropout: spec.dropout,
            activation: activation_label(spec.activation).to_string(),
            gin_epsilon_init: spec.gin_epsilon_init,
            gat_heads: spec.gat_heads,
            leaky_slope: spec.leaky_slope,
        },
        seed: model.seed,
        feature_columns: feature_columns.to_vec(),
        params: model
            .params
            .iter()
            .map(|p| ParamJson {
                name: p.name.clone(),
                rows: p.value.rows,
                cols: p.value.cols,
                data: p.value.data.clone(),
            })
            .collect(),
    };
    write_json(path, &serde_json::to_value(&doc).expect("checkpoint json"))
}

pub fn read_checkpoint(path: &Path) -> Result<(TrainedModel, Vec<String>)> {
    let doc: CheckpointJson =
        serde_json::from_str(&read_to_string(path)?).map_err(|e| CliError::input(path, e))?;
    let spec = ModelSpec {
        architecture: parse_architecture(&doc.spec.architecture)?,
        depth: doc.spec.depth,
        hidden1: doc.spec.hidden1,
        hidden2: doc.spec.hidden2,
        dropout: doc.spec.dropout,
        activation: parse_activation(&doc.spec.activation)?,
        gin_epsilon_init: doc.spec.gin_epsilon_init,
        gat_heads: doc.spec.gat_heads,
        leaky_slope: doc.spec.leaky_slope,
    };
    let params = doc
        .params
        .into_iter()
        .map(|p| {
            if p.data.len() != p.rows * p.cols {
                return Err(CliError::input(path, format!("parameter {:?} has a bad shape", p.name)));
            }
            Ok(Param {
                name: p.name,
                value: Mat::from_vec(p.rows, p.cols, p.data),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        TrainedModel {
            spec,
            params,
            training_log: Vec::new(),
            seed: doc.seed,
        },
        doc.feature_columns,
    ))
}

pub fn write_training_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let rows: Vec<Vec<String>> = log
        .iter()
        .map(|e| vec![e.epoch.to_string(), fmt_f64(e.train_loss), fmt_f64(e.val_loss)])
        .collect();
    write_csv(path, &["epoch", "train_loss", "val_loss"], &rows)
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

/// Per-command provenance record: content hashes of every input, the
/// resolved configuration, the seed, and the produced file names. A rerun
/// against identical input hashes reproduces identical outputs.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    config: Value,
    inputs: &[&Path],
    outputs: &[&str],
) -> Result<()> {
    let mut input_hashes = serde_json::Map::new();
    for path in inputs {
        input_hashes.insert(path.display().to_string(), json!(sha256_hex(path)?));
    }
    let doc = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config,
        "inputs": Value::Object(input_hashes),
        "outputs": outputs,
    });
    write_json(&out_dir.join(format!("{command}_manifest.json")), &doc)
}
