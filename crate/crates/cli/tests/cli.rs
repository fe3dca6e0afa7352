use std::path::{Path, PathBuf};
use std::process::Command;

use jsonschema::JSONSchema;
use momentarb_cli::input::MarketFile;
use momentarb_cli::report::{CommandResult, ReportFile};
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn example(name: &str) -> String {
    root().join("docs/examples").join(name).display().to_string()
}

fn schema(name: &str) -> JSONSchema {
    let text = std::fs::read_to_string(root().join("docs/schema").join(name)).unwrap();
    JSONSchema::compile(&serde_json::from_str::<Value>(&text).unwrap()).unwrap()
}

fn assert_valid(schema: &JSONSchema, v: &Value) {
    if let Err(errors) = schema.validate(v) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("schema violations: {msgs:?}\n{v:#}");
    }
}

/// Run the binary, check the report against the schema and its exit code.
fn run(args: &[&str]) -> (i32, ReportFile) {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> (i32, ReportFile) {
    let out = Command::new(env!("CARGO_BIN_EXE_momentarb"))
        .args(args)
        .env_remove(momentarb_cli::MAX_ITER_ENV)
        .envs(env.iter().copied())
        .output()
        .unwrap();
    let code = out.status.code().unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let value: Value = serde_json::from_str(&stdout).unwrap_or_else(|e| panic!("{e}: {stdout}"));
    assert_valid(&schema("report.schema.json"), &value);
    let report = ReportFile::from_json(&stdout).unwrap();
    assert_eq!(report.exit_code, code);
    (code, report)
}

fn bounds(r: &ReportFile) -> Vec<f64> {
    match &r.result {
        Some(CommandResult::Bound { bounds }) => bounds.iter().map(|b| b.value).collect(),
        Some(CommandResult::OracleBound { bounds }) => bounds.iter().map(|b| b.value).collect(),
        other => panic!("{other:?}"),
    }
}

#[test]
fn feasible_market_exits_zero() {
    let (code, r) = run(&["check", &example("single_asset.json")]);
    assert_eq!(code, 0);
    let Some(CommandResult::Check(report)) = r.result else { panic!() };
    assert_eq!(report.degree, 2);
    assert_eq!(r.inputs.len(), 1);
    assert_eq!(r.inputs[0].sha256.len(), 64);
}

#[test]
fn verdict_field_spelling() {
    let out = Command::new(env!("CARGO_BIN_EXE_momentarb"))
        .args(["check", &example("spread_market.json")])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["verdict"], "no_arbitrage_detected_at_degree");
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn price_above_support_exits_one_with_note() {
    let (code, r) = run(&["check", &example("infeasible_market.json")]);
    assert_eq!(code, 1);
    let Some(CommandResult::Check(report)) = r.result else { panic!() };
    assert_eq!(report.static_violations.len(), 1);
    assert!(report.note.contains("static range"), "{}", report.note);
}

#[test]
fn malformed_json_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"assets\": [").unwrap();
    let (code, r) = run(&["check", path.to_str().unwrap()]);
    assert_eq!(code, 64);
    assert_eq!(r.error.unwrap().kind, "malformed_json");
}

#[test]
fn schema_violations_carry_pointers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"assets": [{"name": "x1", "price": 0.5, "support_max": 1}],
            "derivatives": [{"type": "put", "asset": "x1", "strike": 0.4, "price": 0.1}]}"#,
    )
    .unwrap();
    let (code, r) = run(&["check", path.to_str().unwrap()]);
    assert_eq!(code, 64);
    assert_eq!(r.error.unwrap().violations[0].path, "/derivatives/0/type");

    std::fs::write(&path, r#"{"assets": [{"name": "x1", "price": 0.5, "support_max": 1}], "discount_factor": 0.98}"#).unwrap();
    let (code, r) = run(&["check", path.to_str().unwrap()]);
    assert_eq!(code, 64);
    assert_eq!(r.error.unwrap().violations[0].path, "/discount_factor");
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(run(&["frobnicate"]).0, 64);
    assert_eq!(run(&["bound", &example("single_asset.json")]).0, 64);
    assert_eq!(run(&["check", &example("single_asset.json"), "--tol", "-1"]).0, 64);
    assert_eq!(run(&["bound", &example("single_asset.json"), "--target", "put:x1:0.4"]).0, 64);
    assert_eq!(run(&["check", "/nonexistent/market.json"]).0, 64);
    assert_eq!(
        run_env(&["check", &example("single_asset.json")], &[(momentarb_cli::MAX_ITER_ENV, "many")]).0,
        64
    );
    let (code, r) = run_env(&["check", &example("single_asset.json")], &[(momentarb_cli::MAX_ITER_ENV, "3")]);
    assert_eq!(code, 2);
    assert_eq!(r.settings.unwrap().max_iter, Some(3));
}

#[test]
fn quoted_asset_bound_is_pinned() {
    let (code, r) = run(&["bound", &example("single_asset.json"), "--target", "x1", "--direction", "upper"]);
    assert_eq!(code, 0);
    let Some(CommandResult::Bound { bounds }) = &r.result else { panic!() };
    assert!(bounds[0].pinned);
    assert_eq!(bounds[0].value, 0.5);
}

#[test]
fn spread_bounds_are_ordered_and_tighten_with_degree() {
    let m = example("spread_market.json");
    let t = "spread_straddle:x1:x2:0";
    let (c1, r1) = run(&["bound", &m, "--target", t, "--degree", "1"]);
    let (c2, r2) = run(&["bound", &m, "--target", t, "--degree", "2"]);
    assert_eq!((c1, c2), (0, 0));
    let (b1, b2) = (bounds(&r1), bounds(&r2));
    assert!(b1[1] <= b1[0] && b2[1] <= b2[0]);
    assert!(b2[0] <= b1[0] + 1e-6, "{b1:?} -> {b2:?}");
    assert!(b2[1] >= b1[1] - 1e-6, "{b1:?} -> {b2:?}");
}

#[test]
fn call_target_reports_both_spaces() {
    let (_, r) = run(&["bound", &example("spread_market.json"), "--target", "spread_call:x1:x2:0.1", "--direction", "upper"]);
    let Some(CommandResult::Bound { bounds }) = &r.result else { panic!() };
    let cs = bounds[0].call_space.as_ref().unwrap();
    assert!((cs.call_bound - (cs.straddle_bound - cs.strike + cs.forward) / 2.0).abs() < 1e-11);
    assert_eq!(r.conversions.len(), 1);
    assert_eq!(r.conversions[0].conversion.straddle_price, 0.25);
}

#[test]
fn bound_on_infeasible_market_embeds_the_report() {
    let (code, r) = run(&["bound", &example("infeasible_market.json"), "--target", "x1"]);
    assert_eq!(code, 1);
    let e = r.error.unwrap();
    assert_eq!(e.kind, "infeasible_market");
    assert!(e.arbitrage_report.is_some());
}

#[test]
fn oracle_feasibility_and_bounds() {
    let (code, r) = run(&["oracle", &example("single_asset.json"), "--grid", "51"]);
    assert_eq!(code, 0);
    let Some(CommandResult::OracleFeasibility(f)) = &r.result else { panic!() };
    let w: f64 = f.witness.as_ref().unwrap().weights.iter().sum();
    assert!((w - 1.0).abs() < 1e-9);

    let (code, r) = run(&["oracle", &example("single_asset.json"), "--target", "call:x1:0.4", "--direction", "upper"]);
    assert_eq!(code, 0);
    assert!((bounds(&r)[0] - 0.3).abs() <= 1e-6);

    assert_eq!(run(&["oracle", &example("infeasible_market.json")]).0, 1);
    assert_eq!(run(&["oracle", &example("infeasible_market.json"), "--target", "x1"]).0, 1);
}

#[test]
fn oversized_grid_reports_point_count() {
    let (code, r) = run(&["oracle", &example("spread_market.json"), "--grid", "1001"]);
    assert_eq!(code, 64);
    let e = r.error.unwrap();
    assert_eq!(e.kind, "grid_too_large");
    assert!(e.message.contains("1002001"), "{}", e.message);
}

#[test]
fn martingale_command() {
    let (a, b) = (example("measure_first.json"), example("measure_second.json"));
    let (code, r) = run(&["martingale", &a, &b]);
    assert_eq!(code, 0);
    let Some(CommandResult::Martingale { convex_order, .. }) = &r.result else { panic!() };
    assert!(convex_order.as_ref().unwrap().holds);
    // spreading then concentrating is not a martingale
    assert_eq!(run(&["martingale", &b, &a]).0, 1);
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_momentarb"))
        .args(["check", &example("single_asset.json"), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(status.stdout.is_empty());
    let r = ReportFile::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r.command, "check");
}

#[test]
fn dump_writes_conic_problem() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("p.txt");
    let (code, _) = run(&["check", &example("single_asset.json"), "--dump", dump.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&dump).unwrap();
    let p = momentarb::conic::parse_dump(&text).unwrap();
    assert_eq!(p.blocks().len(), 4);
}

#[test]
fn reports_round_trip() {
    for args in [
        vec!["check".to_string(), example("spread_market.json")],
        vec!["oracle".to_string(), example("single_asset.json"), "--grid".into(), "11".into()],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (_, r) = run(&args);
        let again = ReportFile::from_json(&r.to_json()).unwrap();
        assert_eq!(again, r);
    }
}

#[test]
fn example_inputs_validate_and_round_trip() {
    let market_schema = schema("market.schema.json");
    let measure_schema = schema("measure.schema.json");
    for name in ["single_asset.json", "spread_market.json", "infeasible_market.json"] {
        let text = std::fs::read_to_string(example(name)).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_valid(&market_schema, &v);
        let parsed = MarketFile::parse(text.as_bytes()).unwrap();
        let again = MarketFile::parse(serde_json::to_string(&parsed).unwrap().as_bytes()).unwrap();
        assert_eq!(parsed, again);
    }
    for name in ["measure_first.json", "measure_second.json"] {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(example(name)).unwrap()).unwrap();
        assert_valid(&measure_schema, &v);
    }
}
