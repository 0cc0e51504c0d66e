//! Report emission: delimited results tables, an SVG bar chart of the
//! comparison matrix, and the flat key-list grid-spec file format.

use crate::error::{Error, Result};
use crate::experiment::matrix::{EvalReport, ModelFamily, ScopeLevel};
use crate::experiment::GridSpec;
use crate::ingest::Scale;

/// Render the matrix as tab-delimited text: one row per scope/scale/model,
/// a pairwise-reduction block, and raw per-AP values.
pub fn render_results_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("level\tscale_min\tmodel\trmse\tneurons\tconfig\n");
    for cell in &report.cells {
        let neurons = match cell.neuron_count {
            Some(n) => n.to_string(),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.4}\t{}\t{}\n",
            cell.level.label(),
            cell.scale.minutes(),
            cell.family.label(),
            cell.rmse,
            neurons,
            cell.config
        ));
    }
    out.push('\n');
    out.push_str("level\tscale_min\tbaseline\timproved\treduction_pct\n");
    for row in &report.reductions {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.2}\n",
            row.level.label(),
            row.scale.minutes(),
            row.baseline.label(),
            row.improved.label(),
            row.percent
        ));
    }
    let mut ap_block = String::new();
    for cell in &report.cells {
        for (ap, rmse) in &cell.per_ap {
            ap_block.push_str(&format!(
                "{}\t{}\t{}\t{:.4}\n",
                cell.scale.minutes(),
                cell.family.label(),
                ap,
                rmse
            ));
        }
    }
    if !ap_block.is_empty() {
        out.push('\n');
        out.push_str("scale_min\tmodel\tap\trmse\n");
        out.push_str(&ap_block);
    }
    out
}

fn family_color(family: ModelFamily) -> &'static str {
    match family {
        ModelFamily::Arima => "#9aa0a6",
        ModelFamily::LstmSeparate => "#4c78a8",
        ModelFamily::LstmCombined => "#e45756",
    }
}

/// Render the 18 RMSE cells as a grouped bar chart (one group per
/// scope/scale, one bar per model family), as a standalone SVG document.
pub fn render_rmse_chart_svg(report: &EvalReport) -> String {
    let width = 960.0;
    let height = 480.0;
    let margin_left = 64.0;
    let margin_right = 24.0;
    let margin_top = 56.0;
    let margin_bottom = 64.0;
    let plot_w = width - margin_left - margin_right;
    let plot_h = height - margin_top - margin_bottom;

    let groups: Vec<(ScopeLevel, Scale)> = [ScopeLevel::Building, ScopeLevel::AccessPoint]
        .into_iter()
        .flat_map(|level| Scale::ALL.into_iter().map(move |scale| (level, scale)))
        .collect();
    let max_rmse = report
        .cells
        .iter()
        .map(|c| c.rmse)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let y_top = max_rmse * 1.08;
    let y_of = |v: f64| margin_top + plot_h * (1.0 - v / y_top);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">\
         Forecast RMSE by model family</text>\n",
        width / 2.0
    ));

    // Horizontal gridlines with axis labels.
    for tick in 0..=4 {
        let v = y_top * tick as f64 / 4.0;
        let y = y_of(v);
        svg.push_str(&format!(
            "  <line x1=\"{margin_left}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#ddd\"/>\n",
            width - margin_right
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{v:.2}</text>\n",
            margin_left - 6.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"{:.1}\" font-size=\"12\" transform=\"rotate(-90 16 {:.1})\" \
         text-anchor=\"middle\">RMSE (occupants)</text>\n",
        margin_top + plot_h / 2.0,
        margin_top + plot_h / 2.0
    ));

    let group_w = plot_w / groups.len() as f64;
    let bar_w = group_w / 4.0;
    for (gi, (level, scale)) in groups.iter().enumerate() {
        let group_x = margin_left + gi as f64 * group_w;
        for (fi, family) in ModelFamily::ALL.into_iter().enumerate() {
            if let Some(cell) = report.cell(*level, *scale, family) {
                let x = group_x + bar_w * (0.5 + fi as f64);
                let y = y_of(cell.rmse);
                let h = margin_top + plot_h - y;
                svg.push_str(&format!(
                    "  <rect class=\"bar\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" \
                     height=\"{h:.1}\" fill=\"{}\"><title>{} {}m {}: RMSE {:.4}</title></rect>\n",
                    bar_w * 0.9,
                    family_color(family),
                    level.label(),
                    scale.minutes(),
                    family.label(),
                    cell.rmse
                ));
            }
        }
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{} {}m</text>\n",
            group_x + group_w / 2.0,
            margin_top + plot_h + 20.0,
            level.label(),
            scale.minutes()
        ));
    }

    // Legend.
    for (fi, family) in ModelFamily::ALL.into_iter().enumerate() {
        let x = margin_left + 8.0 + fi as f64 * 150.0;
        svg.push_str(&format!(
            "  <rect x=\"{x:.1}\" y=\"38\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            family_color(family)
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"48\" font-size=\"12\">{}</text>\n",
            x + 16.0,
            family.label()
        ));
    }
    svg.push_str(&format!(
        "  <line x1=\"{margin_left}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#444\"/>\n",
        margin_top + plot_h,
        width - margin_right,
        margin_top + plot_h
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Serialize a grid spec in the flat key-list format [`parse_grid_spec`]
/// reads.
pub fn write_grid_spec(grid: &GridSpec) -> String {
    let list = |xs: &[usize]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    format!(
        "neurons {}\nlayers {}\nlags {}\nbatch_sizes {}\nepochs {}\nseed {}\n",
        list(&grid.neurons),
        list(&grid.layers),
        list(&grid.lags),
        list(&grid.batch_sizes),
        list(&grid.epochs),
        grid.seed
    )
}

/// Parse the flat key-list grid-spec format: one `key value...` line per
/// key, `#` comments and blank lines ignored. All five candidate lists
/// and the seed are required; keys may appear in any order but only once.
pub fn parse_grid_spec(text: &str) -> Result<GridSpec> {
    let mut neurons: Option<Vec<usize>> = None;
    let mut layers: Option<Vec<usize>> = None;
    let mut lags: Option<Vec<usize>> = None;
    let mut batch_sizes: Option<Vec<usize>> = None;
    let mut epochs: Option<Vec<usize>> = None;
    let mut seed: Option<u64> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().expect("non-empty line has a first token");
        let rest: Vec<&str> = parts.collect();
        if rest.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("key {key:?} has no values"),
            });
        }
        let parse_list = |rest: &[&str]| -> Result<Vec<usize>> {
            rest.iter()
                .map(|t| {
                    t.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        reason: format!("invalid integer {t:?}"),
                    })
                })
                .collect()
        };
        let slot: &mut Option<Vec<usize>> = match key {
            "neurons" => &mut neurons,
            "layers" => &mut layers,
            "lags" => &mut lags,
            "batch_sizes" => &mut batch_sizes,
            "epochs" => &mut epochs,
            "seed" => {
                if seed.is_some() {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: "duplicate key \"seed\"".to_string(),
                    });
                }
                if rest.len() != 1 {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: "seed takes exactly one value".to_string(),
                    });
                }
                seed = Some(rest[0].parse().map_err(|_| Error::Parse {
                    line: line_no,
                    reason: format!("invalid seed {:?}", rest[0]),
                })?);
                continue;
            }
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    reason: format!("unknown key {other:?}"),
                })
            }
        };
        if slot.is_some() {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("duplicate key {key:?}"),
            });
        }
        *slot = Some(parse_list(&rest)?);
    }
    let require = |name: &str, v: Option<Vec<usize>>| {
        v.ok_or_else(|| Error::invalid(format!("grid spec is missing key {name:?}")))
    };
    let grid = GridSpec {
        neurons: require("neurons", neurons)?,
        layers: require("layers", layers)?,
        lags: require("lags", lags)?,
        batch_sizes: require("batch_sizes", batch_sizes)?,
        epochs: require("epochs", epochs)?,
        seed: seed.ok_or_else(|| Error::invalid("grid spec is missing key \"seed\""))?,
    };
    grid.validate()?;
    Ok(grid)
}
