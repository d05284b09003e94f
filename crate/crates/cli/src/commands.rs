//! One function per subcommand. Each writes its report files into the
//! configured output directory and returns their paths.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use puf_entropy::codes::{code_by_name, LinearBlockCode};
use puf_entropy::dataset::{
    bit_alias, derive_responses_with, normalize_bias, parse_frequencies, BiasVector, DeviceResponses, TieRecord,
};
use puf_entropy::entropy::{entropy_report, min_entropy_iid, min_entropy_ind, BlockPartition, EntropyReport};
use puf_entropy::grouping::{
    build_bias_groups, enumerate_top_groups, grouping_bound_total, quantization_error_bracket, GroupingTotal,
    QuantizationBracket, RepresentativeMode,
};
use puf_entropy::keyrank::{keyrank_experiment, rank_histogram, KeyRankSettings, RankHistogram, RankStrategy};
use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::error::{CliError, CliResult};
use crate::report::{config_comment, table_round, to_json, write_file};

/// Responses and Bit-Alias of the configured device subset.
pub struct Dataset {
    pub responses: DeviceResponses,
    pub bias: BiasVector,
    /// Original index of every analysed device.
    pub device_ids: Vec<usize>,
}

pub fn load_dataset(cfg: &AnalysisConfig) -> CliResult<Dataset> {
    let path = cfg
        .dataset
        .path
        .as_ref()
        .ok_or_else(|| CliError::Config("no dataset path given".into()))?;
    let file = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let freqs = parse_frequencies(BufReader::new(file), &cfg.dataset.format())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let (freqs, device_ids) = match &cfg.dataset.devices {
        Some(ids) => (freqs.select_devices(ids).map_err(|e| CliError::Data(e.to_string()))?, ids.clone()),
        None => {
            let ids = (0..freqs.device_count()).collect();
            (freqs, ids)
        }
    };
    let responses = derive_responses_with(&freqs, cfg.dataset.reduction)?;
    let bias = bit_alias(&responses);
    Ok(Dataset {
        responses,
        bias,
        device_ids,
    })
}

fn resolve_code(name: &str) -> CliResult<LinearBlockCode> {
    code_by_name(name).map_err(|e| CliError::Config(e.to_string()))
}

fn out_path(cfg: &AnalysisConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

#[derive(Serialize)]
struct TieEcho<'a> {
    policy: &'static str,
    count: usize,
    records: &'a [TieRecord],
}

fn tie_echo(ds: &Dataset) -> TieEcho<'_> {
    TieEcho {
        policy: "equal frequencies yield bit 0",
        count: ds.responses.ties().len(),
        records: ds.responses.ties(),
    }
}

#[derive(Serialize)]
struct BitAliasReport<'a> {
    config: &'a AnalysisConfig,
    ties: TieEcho<'a>,
    devices: usize,
    device_ids: &'a [usize],
    n: usize,
    mean: f64,
    min_entropy_iid: f64,
    min_entropy_ind: f64,
    flip_mask: String,
    p: &'a [f64],
}

pub fn cmd_bitalias(cfg: &AnalysisConfig, width: usize) -> CliResult<Vec<PathBuf>> {
    let ds = load_dataset(cfg)?;
    let p = &ds.bias;
    let (_, mask) = normalize_bias(p);
    let report = BitAliasReport {
        config: cfg,
        ties: tie_echo(&ds),
        devices: ds.responses.device_count(),
        device_ids: &ds.device_ids,
        n: p.len(),
        mean: p.mean(),
        min_entropy_iid: min_entropy_iid(p.mean(), p.len()),
        min_entropy_ind: min_entropy_ind(p.values()),
        flip_mask: mask.to_bit_string(),
        p: p.values(),
    };
    let csv = format!("{}{}", config_comment(cfg), p.to_csv());
    let grid = format!("{}{}", config_comment(cfg), p.heatmap_grid(width));
    Ok(vec![
        write_file(&out_path(cfg, "bitalias.csv"), &csv)?,
        write_file(&out_path(cfg, "bitalias.json"), &to_json(&report))?,
        write_file(&out_path(cfg, "bitalias_heatmap.txt"), &grid)?,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingCell {
    pub theta_delta: f64,
    pub bound: f64,
}

/// One row of the entropy table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    #[serde(flatten)]
    pub entropy: EntropyReport,
    pub grouping: Vec<GroupingCell>,
}

#[derive(Serialize)]
struct FullResponse {
    n: usize,
    m: f64,
    m_tilde: f64,
}

#[derive(Serialize)]
struct TableReport<'a> {
    config: &'a AnalysisConfig,
    ties: TieEcho<'a>,
    devices: usize,
    full_response: FullResponse,
    rows: &'a [TableRow],
}

/// Entropy estimates and grouping bounds for every configured code.
pub fn table_rows(cfg: &AnalysisConfig, p: &BiasVector) -> CliResult<Vec<TableRow>> {
    cfg.codes
        .iter()
        .map(|name| {
            let code = resolve_code(name)?;
            let entropy = entropy_report(&code, p, cfg.hash_loss, cfg.exact)?;
            let part = BlockPartition::new(&code, p.len())?;
            let grouping = cfg
                .theta_delta
                .iter()
                .map(|&t| {
                    let g = grouping_bound_total(&code, p, &part, t, cfg.mode)?;
                    Ok(GroupingCell {
                        theta_delta: t,
                        bound: g.total,
                    })
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(TableRow { entropy, grouping })
        })
        .collect()
}

pub fn table_csv(cfg: &AnalysisConfig, rows: &[TableRow]) -> String {
    let mut out = config_comment(cfg);
    out.push_str("code,n,m,m_tilde,k,l,l_m_tilde,l_tilde,exact_iid,exact_ind");
    for t in &cfg.theta_delta {
        out.push_str(&format!(",grouping_{t}"));
    }
    out.push('\n');
    for r in rows {
        let e = &r.entropy;
        let mut cells = vec![
            e.code.clone(),
            e.n.to_string(),
            table_round(Some(e.m)),
            table_round(Some(e.m_tilde)),
            e.k.to_string(),
            table_round(Some(e.l)),
            table_round(Some(e.l_of_m_tilde)),
            table_round(Some(e.l_tilde)),
            table_round(e.h_exact_iid),
            table_round(e.h_exact_ind),
        ];
        cells.extend(r.grouping.iter().map(|g| table_round(Some(g.bound))));
        out.push_str(&format!("\"{}\"", cells[0]));
        for c in &cells[1..] {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
    }
    out
}

pub fn cmd_table(cfg: &AnalysisConfig) -> CliResult<Vec<PathBuf>> {
    let ds = load_dataset(cfg)?;
    let rows = table_rows(cfg, &ds.bias)?;
    let p = &ds.bias;
    let report = TableReport {
        config: cfg,
        ties: tie_echo(&ds),
        devices: ds.responses.device_count(),
        full_response: FullResponse {
            n: p.len(),
            m: min_entropy_iid(p.mean(), p.len()),
            m_tilde: min_entropy_ind(p.values()),
        },
        rows: &rows,
    };
    Ok(vec![
        write_file(&out_path(cfg, "table.csv"), &table_csv(cfg, &rows))?,
        write_file(&out_path(cfg, "table.json"), &to_json(&report))?,
    ])
}

#[derive(Serialize)]
struct EntropyDoc<'a> {
    config: &'a AnalysisConfig,
    report: &'a EntropyReport,
}

pub fn cmd_entropy(cfg: &AnalysisConfig, code_name: &str, require_exact: bool) -> CliResult<Vec<PathBuf>> {
    let code = resolve_code(code_name)?;
    let ds = load_dataset(cfg)?;
    let report = entropy_report(&code, &ds.bias, cfg.hash_loss, true)?;
    if require_exact && report.h_exact_ind.is_none() {
        return Err(CliError::Capability(format!(
            "exact conditional min-entropy is infeasible for {}",
            code.name()
        )));
    }
    let doc = EntropyDoc {
        config: cfg,
        report: &report,
    };
    Ok(vec![write_file(
        &out_path(cfg, &format!("entropy_{}.json", code.id())),
        &to_json(&doc),
    )?])
}

#[derive(Serialize)]
struct GroupingDoc<'a> {
    config: &'a AnalysisConfig,
    code: String,
    theta_delta: f64,
    mode: RepresentativeMode,
    result: &'a GroupingTotal,
    /// Per-block bracket between highest and lowest representatives.
    brackets: &'a [QuantizationBracket],
}

pub fn cmd_grouping(
    cfg: &AnalysisConfig,
    code_name: &str,
    theta_delta: f64,
    emit_table: Option<&Path>,
    max_table_rows: usize,
) -> CliResult<Vec<PathBuf>> {
    if !(theta_delta > 0.0 && theta_delta <= 1.0) {
        return Err(CliError::Config(format!("theta_delta {theta_delta} is outside (0, 1]")));
    }
    let code = resolve_code(code_name)?;
    let ds = load_dataset(cfg)?;
    let part = BlockPartition::new(&code, ds.bias.len())?;
    let result = grouping_bound_total(&code, &ds.bias, &part, theta_delta, cfg.mode)?;
    let (normalized, _) = normalize_bias(&ds.bias);
    let brackets = part
        .ranges()
        .map(|r| quantization_error_bracket(code.n(), code.k(), normalized.slice(r), theta_delta))
        .collect::<puf_entropy::Result<Vec<_>>>()?;

    let mut written = Vec::new();
    if let Some(path) = emit_table {
        let target = 1u128 << (code.n() - code.k());
        let mut csv = config_comment(cfg);
        for (b, r) in part.ranges().enumerate() {
            let groups = build_bias_groups(normalized.slice(r), theta_delta, cfg.mode)?;
            let table = enumerate_top_groups(&groups, target, max_table_rows)?;
            csv.push_str(&format!(
                "# block {b}: eta = {:?}, theta = {:?}, omega = {}, partial = {}\n",
                table.etas, table.thetas, table.omega, table.partial_count
            ));
            for line in table.to_csv().lines() {
                if line.starts_with("row") {
                    if b == 0 {
                        csv.push_str(&format!("block,{line}\n"));
                    }
                } else {
                    csv.push_str(&format!("{b},{line}\n"));
                }
            }
        }
        written.push(write_file(path, &csv)?);
    }
    let doc = GroupingDoc {
        config: cfg,
        code: code.name(),
        theta_delta,
        mode: cfg.mode,
        result: &result,
        brackets: &brackets,
    };
    written.push(write_file(
        &out_path(cfg, &format!("grouping_{}_{theta_delta}.json", code.id())),
        &to_json(&doc),
    )?);
    Ok(written)
}

#[derive(Serialize)]
struct KeyRankDoc<'a> {
    config: &'a AnalysisConfig,
    code: String,
    k: usize,
    n: usize,
    keys: usize,
    seed: u64,
    bins: usize,
    strategy: RankStrategy,
    /// Grouping bound per configured `theta_delta`, for plot markers.
    grouping_bound: &'a [GroupingCell],
    mean_log2_rank: f64,
    mean_log2_rank_lower: f64,
    mean_log2_rank_upper: f64,
    all_key_invariant: bool,
    impossible_devices: Vec<usize>,
    histogram: RankHistogram,
}

pub fn cmd_keyrank(cfg: &AnalysisConfig, code_name: &str, strategy: RankStrategy) -> CliResult<Vec<PathBuf>> {
    let code = resolve_code(code_name)?;
    let ds = load_dataset(cfg)?;
    keyrank_report(cfg, &ds, &code, strategy)
}

fn keyrank_report(
    cfg: &AnalysisConfig,
    ds: &Dataset,
    code: &LinearBlockCode,
    strategy: RankStrategy,
) -> CliResult<Vec<PathBuf>> {
    let settings = KeyRankSettings {
        keys: cfg.keys,
        seed: cfg.seed,
        bins: cfg.bins,
        strategy,
    };
    let exp = keyrank_experiment(&ds.responses, &ds.bias, code, &settings)?;
    let part = BlockPartition::new(code, ds.bias.len())?;
    let grouping = cfg
        .theta_delta
        .iter()
        .map(|&t| {
            Ok(GroupingCell {
                theta_delta: t,
                bound: grouping_bound_total(code, &ds.bias, &part, t, cfg.mode)?.total,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut csv = config_comment(cfg);
    csv.push_str("device,key_index,log2_rank_lower,log2_rank_est,log2_rank_upper\n");
    for d in &exp.devices {
        for (i, r) in d.ranks.iter().enumerate() {
            csv.push_str(&format!(
                "{},{i},{},{},{}\n",
                ds.device_ids[d.device],
                r.log2_lower(),
                r.log2_estimate(),
                r.log2_upper()
            ));
        }
    }
    let doc = KeyRankDoc {
        config: cfg,
        code: exp.code.clone(),
        k: exp.k,
        n: exp.n,
        keys: exp.keys,
        seed: exp.seed,
        bins: exp.bins,
        strategy,
        grouping_bound: &grouping,
        mean_log2_rank: exp.mean_log2_rank,
        mean_log2_rank_lower: exp.mean_log2_rank_lower,
        mean_log2_rank_upper: exp.mean_log2_rank_upper,
        all_key_invariant: exp.all_key_invariant,
        impossible_devices: exp.impossible_devices.iter().map(|&d| ds.device_ids[d]).collect(),
        histogram: rank_histogram(&exp),
    };
    Ok(vec![
        write_file(&out_path(cfg, &format!("keyrank_{}.csv", code.id())), &csv)?,
        write_file(&out_path(cfg, &format!("keyrank_{}.json", code.id())), &to_json(&doc))?,
    ])
}

/// Bit-Alias, table and key-rank reports for every configured code.
pub fn cmd_run(cfg: &AnalysisConfig, width: usize) -> CliResult<Vec<PathBuf>> {
    let mut written = cmd_bitalias(cfg, width)?;
    written.extend(cmd_table(cfg)?);
    let ds = load_dataset(cfg)?;
    for name in &cfg.codes {
        let code = resolve_code(name)?;
        written.extend(keyrank_report(cfg, &ds, &code, RankStrategy::Auto)?);
    }
    Ok(written)
}
