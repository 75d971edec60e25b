use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cohesion_cli::gamefile::GameFile;
use cohesion_cli::trajectory;
use serde_json::Value;

const EXAMPLE: &str = r#"players = ["a", "b", "c"]

[values]
a = -3.0
b = -3.0
c = -3.0
"a+b" = -3.0
"a+c" = -3.0
"b+c" = -3.0
"a+b+c" = 0.0
"#;

const MAJORITY: &str = r#"players = ["a", "b", "c"]

[values]
a = 0.0
b = 0.0
c = 0.0
"a+b" = 1.0
"a+c" = 1.0
"b+c" = 1.0
"a+b+c" = 1.0
"#;

const FOUR: &str = "players = [\"p\", \"q\", \"r\", \"s\"]\nformula = { type = \"symmetric\", c = -1.0 }\n";

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let sb = Sandbox { dir: tempfile::tempdir().unwrap() };
        sb.file("example.toml", EXAMPLE);
        sb.file("majority.toml", MAJORITY);
        sb.file("four.toml", FOUR);
        sb
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_cohesion"))
            .current_dir(self.dir.path())
            .env_remove("COHESION_THREADS")
            .args(args)
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn validator() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/cli-json-schema.json");
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn json(o: &Output) -> Value {
    let v: Value = serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)));
    let errors: Vec<String> = validator().iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}\n{v:#}");
    v
}

fn close(v: &Value, want: f64) -> bool {
    (v.as_f64().unwrap() - want).abs() <= 1e-12
}

#[test]
fn eval_reports_the_worked_example() {
    let sb = Sandbox::new();
    let o = sb.run(&["eval", "example.toml", "-4,-3,7"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("theta = 8.5"), "{text}");
    assert!(text.contains("aggrieved: a | a+b"));
    assert!(text.contains("not in core"));

    let v = json(&sb.run(&["eval", "example.toml", "-4,-3,7", "--json"]));
    assert!(close(&v["theta"], 8.5));
    let phi: Vec<f64> = v["phi"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert!(phi.iter().zip([2.0, 1.0, -3.0]).all(|(a, b)| (a - b).abs() <= 1e-12));
    assert_eq!(v["aggrieved"], serde_json::json!(["a", "a+b"]));
    assert_eq!(v["in_core"], false);
}

#[test]
fn eval_origin_is_in_core() {
    let sb = Sandbox::new();
    let v = json(&sb.run(&["eval", "example.toml", "0,0,0", "--json"]));
    assert_eq!(v["in_core"], true);
    assert!(close(&v["theta"], 0.0));
}

#[test]
fn eval_efficiency_and_parse_errors() {
    let sb = Sandbox::new();
    let o = sb.run(&["eval", "example.toml", "1,1,1"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("--project"));
    let v = json(&sb.run(&["eval", "example.toml", "1,1,1", "--project", "--json"]));
    assert_eq!(v["projected"], true);
    assert!(v["x"].as_array().unwrap().iter().all(|x| close(x, 0.0)));

    sb.file("bad.toml", "players = [\"a\", \"b\"]\n[values]\na = 1.0\nb = oops\n");
    let o = sb.run(&["eval", "bad.toml", "0,0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    assert_eq!(code(&sb.run(&["eval", "example.toml", "1,x,2"])), 2);
    assert_eq!(code(&sb.run(&["eval", "example.toml", "1,-1"])), 2);
    assert_eq!(code(&sb.run(&["eval", "missing.toml", "0,0,0"])), 2);
}

#[test]
fn flow_writes_a_trajectory_file() {
    let sb = Sandbox::new();
    let o = sb.run(&["flow", "example.toml", "-4,-3,7", "--out", "traj.csv", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["status"], "ReachedCore");
    let traj = trajectory::parse(&std::fs::read_to_string(sb.path("traj.csv")).unwrap()).unwrap();
    assert_eq!(traj.samples.len() as u64, v["samples"].as_u64().unwrap());
    assert_eq!(traj.samples[0].x, vec![-4.0, -3.0, 7.0]);
    assert!(traj.samples.windows(2).all(|w| w[1].theta <= w[0].theta + 1e-12));
    let last = traj.samples.last().unwrap();
    let fin: Vec<f64> = v["final_point"].as_array().unwrap().iter().map(|p| p.as_f64().unwrap()).collect();
    assert!(last.x.iter().zip(&fin).all(|(a, b)| (a - b).abs() <= 1e-12));
}

#[test]
fn flow_from_core_is_a_single_row() {
    let sb = Sandbox::new();
    for integrator in ["rk4", "adaptive", "exact"] {
        let o = sb.run(&["flow", "example.toml", "0.5,0.5,-1", "--integrator", integrator, "--out", "core.csv"]);
        assert_eq!(code(&o), 0);
        let traj = trajectory::parse(&std::fs::read_to_string(sb.path("core.csv")).unwrap()).unwrap();
        assert_eq!(traj.samples.len(), 1, "{integrator}");
    }
}

#[test]
fn flow_timeout_exits_4() {
    let sb = Sandbox::new();
    for integrator in ["rk4", "adaptive", "exact"] {
        let o = sb.run(&["flow", "example.toml", "-40,-30,70", "--integrator", integrator, "--t-max", "1e-6", "--json"]);
        assert_eq!(code(&o), 4, "{integrator}: {}", stderr(&o));
        assert_eq!(json(&o)["status"], "MaxTime");
    }
    assert_eq!(code(&sb.run(&["flow", "example.toml", "-4,-3,7", "--dt", "-1"])), 2);
}

#[test]
fn core_queries() {
    let sb = Sandbox::new();
    let v = json(&sb.run(&["core", "nonempty", "example.toml", "--json"]));
    assert_eq!(v["nonempty"], true);
    assert!(close(&v["least_core_value"], -3.0));
    let v = json(&sb.run(&["core", "least", "majority.toml", "--json"]));
    assert_eq!(v["nonempty"], false);
    assert!(v["least_core_value"].as_f64().unwrap() > 0.0);
    let v = json(&sb.run(&["core", "check", "example.toml", "0,0,0", "--json"]));
    assert_eq!(v["member"], true);
    let v = json(&sb.run(&["core", "check", "example.toml", "-4,-3,7", "--json"]));
    assert_eq!(v["member"], false);
    assert_eq!(v["violations"][0]["coalition"], "a+b");

    let v = json(&sb.run(&["core", "project", "example.toml", "-4,-3,7", "--json"]));
    assert!(v["distance"].as_f64().unwrap() >= 4.0 / (2.0f64 / 3.0).sqrt() - 1e-9);
    let o = sb.run(&["core", "project", "majority.toml", "0,0,0"]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("empty"));
}

#[test]
fn balanced_collections() {
    let sb = Sandbox::new();
    let v = json(&sb.run(&["balanced", "a|b|c", "--n", "3", "--json"]));
    assert_eq!(v["balanced"], true);
    assert!(v["weights"].as_array().unwrap().iter().all(|w| close(w, 1.0)));
    let v = json(&sb.run(&["balanced", "a+b|b+c|a+c", "--n", "3", "--json"]));
    assert!(v["weights"].as_array().unwrap().iter().all(|w| close(w, 0.5)));
    assert!(v["eta_residual"].as_f64().unwrap() <= 1e-9);
    let v = json(&sb.run(&["balanced", "a|a+b", "--n", "3", "--json"]));
    assert_eq!(v["balanced"], false);
    assert!(v["weights"].is_null());
    let o = sb.run(&["balanced", "x+y|y", "--n", "2", "--players", "x,y"]);
    assert!(stdout(&o).starts_with("unbalanced"));
    assert_eq!(code(&sb.run(&["balanced", "a|q", "--n", "3"])), 2);
}

#[test]
fn plot_writes_svg_for_three_players_only() {
    let sb = Sandbox::new();
    let o = sb.run(&["plot", "example.toml", "--out", "fig.svg", "--start=-4,-3,7", "--random-starts", "2", "--grid", "50", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(json(&o)["trajectories"], 3);
    let svg = std::fs::read_to_string(sb.path("fig.svg")).unwrap();
    assert!(svg.contains("<svg") && svg.matches("<polyline").count() == 3);
    let o = sb.run(&["plot", "four.toml", "--out", "four.svg"]);
    assert_eq!(code(&o), 6);
    assert!(!sb.path("four.svg").exists());
    let o = sb.run(&["plot", "majority.toml", "--out", "maj.svg", "--no-field", "--grid", "30"]);
    assert_eq!(code(&o), 0);
    assert!(!std::fs::read_to_string(sb.path("maj.svg")).unwrap().contains("#5b8fd6\""));
}

#[test]
fn probe_summaries_and_exit_codes() {
    let sb = Sandbox::new();
    let o = sb.run(&["probe", "example.toml", "--count", "200", "--radius", "100", "--report", "runs.csv", "--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v = json(&o);
    assert_eq!(v["reached_core"], 200);
    assert!(v["max_final_distance"].as_f64().unwrap() < 1e-6);
    let rows = std::fs::read_to_string(sb.path("runs.csv")).unwrap();
    assert_eq!(rows.lines().count(), 201);

    let v = json(&sb.run(&["probe", "example.toml", "--count", "0", "--json"]));
    assert_eq!(v["runs"], 0);

    let o = sb.run(&["probe", "majority.toml", "--count", "30", "--radius", "10"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("core is empty") && stdout(&o).contains("StationaryPoint: 30"));

    // a horizon too short to converge fails the probe on a balanced game
    let o = sb.run(&["probe", "example.toml", "--count", "10", "--t-max", "1e-3"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn probe_is_deterministic_across_thread_counts() {
    let sb = Sandbox::new();
    let mut reports = Vec::new();
    for threads in ["1", "3"] {
        let o = Command::new(env!("CARGO_BIN_EXE_cohesion"))
            .current_dir(sb.dir.path())
            .env("COHESION_THREADS", threads)
            .args(["probe", "example.toml", "--count", "50", "--seed", "9", "--report", "r.csv"])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        reports.push(std::fs::read_to_string(sb.path("r.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let o = Command::new(env!("CARGO_BIN_EXE_cohesion"))
        .current_dir(sb.dir.path())
        .env("COHESION_THREADS", "zero")
        .args(["probe", "example.toml", "--count", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn game_file_round_trip_through_disk() {
    let sb = Sandbox::new();
    let g = cohesion::game::gen_random(5, 42, true).unwrap();
    let file = GameFile::from_game(&g);
    let path = sb.file("g5.toml", &file.to_toml());
    let again = GameFile::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(again.game().unwrap().values(), g.values());
    let o = sb.run(&["core", "nonempty", "g5.toml"]);
    assert!(stdout(&o).contains("nonempty"));
}
