use std::collections::BTreeSet;

use hypsearch::harness::{record_demo_corpus, run_episode, sample_pose, BoardConfig};
use hypsearch::learning::{build_binary_dataset, build_mc_dataset, read_demos, BinaryMode};
use hypsearch::{seed, Agent, Board, Direction, EpisodeStatus, GridCell};

const EPISODES: usize = 500;
const MASTER: u64 = 3;

fn corpus() -> (BoardConfig, hypsearch::harness::CorpusStats, Vec<hypsearch::Demonstration>) {
    let cfg = BoardConfig::default();
    let mut buf = Vec::new();
    let stats = record_demo_corpus(EPISODES, &cfg, MASTER, &mut buf).unwrap();
    let demos = read_demos(&buf[..]).unwrap();
    (cfg, stats, demos)
}

#[test]
fn class_histogram_and_step_total_match_transcripts() {
    let (cfg, stats, demos) = corpus();
    assert_eq!(stats.episodes, EPISODES);

    // re-run every episode and recount from its transcript
    let universe = cfg.universe().unwrap();
    let mut hist = [0usize; 8];
    let mut steps = 0;
    let mut written = 0;
    let mut with_moves = 0;
    for i in 0..EPISODES as u64 {
        let pose = sample_pose(&universe, seed::derive(MASTER, seed::DEMO_STREAM, i, 0));
        let r = run_episode(&Agent::<f64>::Oracle, &cfg, pose, seed::derive(MASTER, seed::DEMO_STREAM, i, 1)).unwrap();
        if r.status != EpisodeStatus::Success {
            continue;
        }
        written += 1;
        with_moves += usize::from(r.steps > 0);
        steps += r.steps;
        for e in r.transcript.iter().filter(|e| e.target.is_some()) {
            let d = Direction::between(e.agent_cell, e.target.unwrap()).expect("oracle moves to a neighbor");
            hist[d.index()] += 1;
        }
    }
    assert_eq!(written, stats.written);
    // episodes solved by the initial reveal have no step lines
    assert_eq!(demos.len(), with_moves);
    assert_eq!(steps, stats.steps_written);
    assert_eq!(demos.iter().map(|d| d.steps.len()).sum::<usize>(), steps);

    let (ds, report) = build_mc_dataset(&demos).unwrap();
    assert!(report.warnings.is_empty());
    assert_eq!(ds.class_counts()[..8], hist[..]);
}

fn unopened_neighbors(board: &Board, cell: GridCell, opened: &BTreeSet<GridCell>) -> usize {
    board.neighbors(cell).filter(|c| !opened.contains(c)).count()
}

#[test]
fn binary_label_ratios_match_legal_neighbor_counts() {
    let (cfg, _, demos) = corpus();
    let board = cfg.board().unwrap();
    let (mut pos, mut neg_b8, mut neg_be) = (0, 0, 0);
    for d in &demos {
        for s in &d.steps {
            let opened: BTreeSet<GridCell> = s.opened.iter().copied().collect();
            pos += 1;
            neg_b8 += unopened_neighbors(&board, s.agent_cell, &opened) - 1;
            let frontier = board
                .cells()
                .filter(|c| !opened.contains(c) && board.neighbors(*c).any(|n| opened.contains(&n)))
                .count();
            neg_be += (frontier - 1).min(8);
        }
    }
    let count = |labels: &[i32], y: i32| labels.iter().filter(|&&l| l == y).count();
    let (b8, _) = build_binary_dataset(&demos, BinaryMode::B8, 0, 1).unwrap();
    assert_eq!((count(&b8.labels, 1), count(&b8.labels, -1)), (pos, neg_b8));
    let (be, _) = build_binary_dataset(&demos, BinaryMode::Be, 8, 1).unwrap();
    assert_eq!((count(&be.labels, 1), count(&be.labels, -1)), (pos, neg_be));
}
