use std::path::Path;
use std::process::Command;

use dprl_core::LinearMdp;
use dprl_sim::config::parse_config;
use dprl_sim::records::read_csv;
use dprl_sim::run_experiment;

fn dprl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dprl")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const RL: &str = "kind = \"rl\"\nseed = 11\nreplications = 3\n\
                  [environment]\ntype = \"random\"\nstates = 3\nactions = 2\n\
                  [agent]\nd = 2\nH = 2\nK = 40\nrho = 1.0\n";

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rl.toml", RL);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = dprl(&["run-rl", "--config", &cfg, "--out", out.to_str().unwrap(), "--plot"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("records.csv")).unwrap());
        let svg = std::fs::read_to_string(out.join("regret.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
    assert_eq!(outputs[0], outputs[1]);
    let records = read_csv(outputs[0].as_slice()).unwrap();
    assert_eq!(records.len(), 120);
    assert!(records.iter().all(|r| r.rho_spent <= 1.0));

    let other = dir.path().join("c");
    let o = dprl(&["run-rl", "--config", &cfg, "--out", other.to_str().unwrap(), "--seed", "12"]);
    assert!(o.status.success());
    assert_ne!(std::fs::read(other.join("records.csv")).unwrap(), outputs[0]);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", &format!("{RL}foo = 1\n"));
    assert_eq!(dprl(&["run-rl", "--config", &bad]).status.code(), Some(2));
    let zero = write(dir.path(), "zero.toml", &RL.replace("replications = 3", "replications = 0"));
    assert_eq!(dprl(&["run-rl", "--config", &zero]).status.code(), Some(2));
    let rl = write(dir.path(), "rl.toml", RL);
    assert_eq!(dprl(&["run-bandit", "--config", &rl]).status.code(), Some(2));
    assert_eq!(dprl(&["run-rl", "--config", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn audits_pass_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "audit.toml", "kind = \"audit\"\nseed = 5\n[audit]\ntrials = 100\nseeds = 2\nepisodes = 16\n");
    for suite in ["sensitivity", "noise", "optimism", "switching"] {
        let o = dprl(&["audit", "--suite", suite, "--config", &cfg]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
    }
    let strict = write(
        dir.path(),
        "strict.toml",
        "kind = \"audit\"\nseed = 5\n[audit]\nsuite = \"noise\"\ntrials = 200\nfailure_prob = 0.01\nlog_terms = 1\ndims = [1]\n",
    );
    let o = dprl(&["audit", "--config", &strict]);
    assert_eq!(o.status.code(), Some(0));

    // Without a bonus the ridge estimates shrink toward zero and stop being optimistic.
    let greedy = write(
        dir.path(),
        "greedy.toml",
        "kind = \"audit\"\nseed = 5\n[audit]\nsuite = \"optimism\"\nseeds = 4\nepisodes = 32\nrho = 0\nbeta = 0\n",
    );
    let o = dprl(&["audit", "--config", &greedy]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    assert_eq!(dprl(&["audit", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn sweep_writes_one_directory_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rl.toml", &RL.replace("K = 40", "K = 10"));
    let out = dir.path().join("sweep");
    let o = dprl(&["sweep", "--param", "agent.rho", "--values", "0.5,2", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["agent.rho=0.5", "agent.rho=2"] {
        let records = read_csv(std::fs::File::open(out.join(v).join("records.csv")).unwrap()).unwrap();
        let cap: f64 = v.rsplit('=').next().unwrap().parse().unwrap();
        assert!(records.iter().all(|r| r.rho_spent <= cap));
    }
}

#[test]
fn bandit_from_decision_set_file() {
    let dir = tempfile::tempdir().unwrap();
    let sets: String = (0..50).map(|t| format!("1 0\n0 1\n{} 0.6\n\n", if t % 2 == 0 { 0.8 } else { -0.8 })).collect();
    write(dir.path(), "sets.txt", &sets);
    let cfg = write(
        dir.path(),
        "bandit.toml",
        "kind = \"bandit\"\nseed = 2\n[agent]\nd = 2\nT = 50\nrho = 0\n\
         [environment]\ndecision_sets = \"file\"\nfile = \"sets.txt\"\ntheta = [0.0, 1.0]\nnoise = 0.0\n",
    );
    let out = dir.path().join("out");
    let o = dprl(&["run-bandit", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_csv(std::fs::File::open(out.join("records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 50);
    // Noise-free rewards: the optimal arm (0, 1) is found quickly and kept.
    assert!(records[49].inst_regret == 0.0);
    let short = write(dir.path(), "short.toml", &std::fs::read_to_string(&cfg).unwrap().replace("T = 50", "T = 60"));
    assert_eq!(dprl(&["run-bandit", "--config", &short]).status.code(), Some(2));
}

#[test]
fn tabular_run_beats_uniform_random() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "tab.toml",
        "kind = \"rl\"\nseed = 4\n[environment]\ntype = \"tabular\"\nstates = 1\nactions = 2\ninstance_seed = 8\n\
         [agent]\nd = 2\nH = 2\nK = 256\nrho = 0\nbeta = 2.0\n",
    );
    let config = parse_config(Path::new(&cfg)).unwrap();
    let records = run_experiment(&config).unwrap().unwrap();
    let final_regret = records.last().unwrap().cum_regret;
    assert!(final_regret < 256.0 * 2.0);

    let mdp = LinearMdp::random_tabular(8, 1, 2, 2).unwrap();
    let best = mdp.solve_oracle().v(0, 0);
    let mut mean = 0.0;
    for code in 0..4usize {
        mean += mdp.policy_value(|h, _| (code >> h) & 1).get(0, 0) / 4.0;
    }
    let random_regret = 256.0 * (best - mean);
    assert!(final_regret < random_regret, "{final_regret} vs uniform {random_regret}");
}

#[test]
fn instance_file_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = LinearMdp::random_instance(3, 2, 3, 2, 2).unwrap();
    dprl_sim::io::write_instance(&mdp, &dir.path().join("inst.toml")).unwrap();
    let cfg = write(
        dir.path(),
        "rl.toml",
        "kind = \"rl\"\nseed = 1\n[environment]\ntype = \"file\"\nfile = \"inst.toml\"\n[agent]\nd = 2\nH = 2\nK = 8\nrho = 0\n",
    );
    let records = run_experiment(&parse_config(Path::new(&cfg)).unwrap()).unwrap().unwrap();
    assert_eq!(records.len(), 8);
    let wrong = write(dir.path(), "wrong.toml", &std::fs::read_to_string(&cfg).unwrap().replace("d = 2", "d = 3"));
    assert_eq!(dprl(&["run-rl", "--config", &wrong]).status.code(), Some(2));
}
