use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use revisit::cli_eval::{PriorModel, PR_HEADER};
use revisit::localization_filter::STEP_LOG_HEADER;
use revisit::partial_map::{Cell, OccupancyGrid};
use revisit::sim_world::{load_map, Trajectory};

fn revisit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_revisit")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = revisit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/maps").join(name).display().to_string()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.dir.path().join(name)).unwrap()
    }

    /// Prior from two bundled maps, an exploration run of the office and its
    /// carved partial map, and a second office run.
    fn prepared() -> Self {
        let w = Self::new();
        ok(&["train-prior", "--maps", &fixture("loop.map"), &fixture("maze.map"), "--out", &w.path("prior.json")]);
        ok(&["simulate", "--map", &fixture("office.map"), "--length", "30", "--seed", "1", "--out", &w.path("explore.traj")]);
        ok(&["carve", "--map", &fixture("office.map"), "--trajectory", &w.path("explore.traj"), "--out", &w.path("partial.map")]);
        ok(&["simulate", "--map", &fixture("office.map"), "--length", "20", "--seed", "2", "--out", &w.path("run.traj")]);
        w
    }

    fn localize(&self, seed: &str, out: &str) {
        ok(&[
            "localize",
            "--map",
            &self.path("partial.map"),
            "--prior",
            &self.path("prior.json"),
            "--trajectory",
            &self.path("run.traj"),
            "--particles",
            "1000",
            "--seed",
            seed,
            "--out",
            &self.path(out),
        ]);
    }
}

#[test]
fn pipeline_outputs_parse_and_localize_is_deterministic() {
    let w = Workspace::prepared();

    let prior = PriorModel::from_json(&w.read("prior.json")).unwrap();
    assert_eq!(prior.environments, ["loop", "maze"]);
    assert_ne!(prior.posterior(0), prior.posterior(1));

    let full = load_map(&std::fs::read_to_string(fixture("office.map")).unwrap()).unwrap();
    let partial: OccupancyGrid = load_map(&w.read("partial.map")).unwrap();
    assert_eq!((partial.width(), partial.height()), (full.width(), full.height()));
    assert!(partial.cells().iter().any(|&c| c == Cell::Unknown));
    let (run, _) = Trajectory::from_text(&w.read("run.traj")).unwrap();
    assert!(run.length() >= 20.0 - 1e-9);

    w.localize("7", "a.csv");
    w.localize("7", "b.csv");
    w.localize("8", "c.csv");
    let a = w.read("a.csv");
    assert_eq!(a.lines().next(), Some(STEP_LOG_HEADER));
    // one row per view update: the first record, then every 2 m of odometry
    let rows = a.lines().count() - 1;
    assert!((9..=12).contains(&rows), "{rows} rows");
    assert_eq!(a, w.read("b.csv"));
    assert_ne!(a, w.read("c.csv"));
}

#[test]
fn evaluate_writes_one_row_per_method_and_threshold() {
    let w = Workspace::prepared();
    let manifest = "[[pair]]\npartial_map = \"partial.map\"\ntrajectory = \"run.traj\"\nenvironment = \"office\"\nprior = \"prior.json\"\n";
    std::fs::write(w.dir.path().join("manifest.toml"), manifest).unwrap();
    ok(&[
        "evaluate",
        "--manifest",
        &w.path("manifest.toml"),
        "--methods",
        "prior_only,fixed:0.1",
        "--thresholds",
        "0.3,0.6,0.9",
        "--particles",
        "500",
        "--out",
        &w.path("pr.csv"),
    ]);
    let table = w.read("pr.csv");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], PR_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == PR_HEADER.split(',').count()));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let w = Workspace::new();
    std::fs::write(w.dir.path().join("broken.map"), "not a map\n").unwrap();
    let cases: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--map".into(), w.path("missing.map"), "--out".into(), w.path("t.traj")],
        vec!["simulate".into(), "--map".into(), w.path("broken.map"), "--out".into(), w.path("t.traj")],
        vec!["simulate".into(), "--map".into(), fixture("office.map"), "--policy".into(), "spin".into(), "--out".into(), w.path("t.traj")],
        vec!["carve".into(), "--map".into(), fixture("office.map"), "--trajectory".into(), w.path("broken.map"), "--out".into(), w.path("p.map")],
        vec!["localize".into(), "--map".into(), fixture("office.map"), "--prior".into(), w.path("broken.map"), "--trajectory".into(), w.path("x"), "--out".into(), w.path("s.csv")],
        vec!["localize".into(), "--map".into(), fixture("office.map"), "--prior".into(), w.path("p"), "--trajectory".into(), w.path("x"), "--method".into(), "magic".into(), "--out".into(), w.path("s.csv")],
    ];
    for args in &cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = revisit(&args);
        assert!(!out.status.success(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
    let written: Vec<PathBuf> = std::fs::read_dir(w.dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(written.len(), 1, "{written:?}");
}
