use hypsearch::agents::{b8_action, be_action, heuristic_action};
use hypsearch::features::FeatureVariant;
use hypsearch::grid::shape_cells;
use hypsearch::learning::LinearModel;
use hypsearch::{seed, Board, EpisodeState, FeatureMap, GridCell, HypothesisSet, Hyperparameters, ModelKind, ShapeTemplate};
use hypsearch::BeliefConfig;
use rand::seq::SliceRandom;
use rand::Rng;

struct Situation {
    state: EpisodeState,
    fm: FeatureMap,
    model: LinearModel<f64>,
}

/// Random mid-episode state with a random binary model.
fn situation(i: u64) -> Situation {
    let mut rng = seed::rng(seed::derive(404, 0, i, 0));
    let board = Board::new(rng.gen_range(5..11), rng.gen_range(5..11)).unwrap();
    let template = ShapeTemplate::h3();
    let cfg = BeliefConfig::default();
    let universe = HypothesisSet::universe(board, template.clone(), &cfg).unwrap();
    let truth = *universe.poses().choose(&mut rng).unwrap();
    let mut state = EpisodeState::init(board, template.clone(), truth, rng.gen()).unwrap();
    let mines = shape_cells(&template, &truth);
    let mut h = universe.filter(state.initial_cell(), state.peek(state.initial_cell())).unwrap();
    for _ in 0..rng.gen_range(0..6) {
        let mut safe: Vec<GridCell> = board.cells().filter(|c| !mines.contains(c) && !state.is_opened(*c)).collect();
        safe.shuffle(&mut rng);
        let Some(&c) = safe.first() else { break };
        let k = state.open_cell(c).unwrap();
        h = h.filter(c, k).unwrap();
    }
    let fm = FeatureMap::from_belief(&h, FeatureVariant::Accumulated).unwrap();
    let mut model = LinearModel::zeros(ModelKind::Binary, Hyperparameters::default());
    model.weights[0] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    model.biases[0] = rng.gen_range(-0.5..0.5);
    Situation { state, fm, model }
}

fn padded(fm: &FeatureMap, c: GridCell) -> [f64; 9] {
    let board = fm.board();
    let mut v = [0.0; 9];
    for dr in 0..3 {
        for dc in 0..3 {
            let (r, cc) = (c.row as isize + dr - 1, c.col as isize + dc - 1);
            if r >= 0 && cc >= 0 && (r as usize) < board.rows && (cc as usize) < board.cols {
                v[(dr * 3 + dc) as usize] = fm.at(GridCell::new(r as usize, cc as usize));
            }
        }
    }
    v
}

fn score(m: &LinearModel<f64>, x: &[f64; 9]) -> f64 {
    m.weights[0].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + m.biases[0]
}

fn unopened_neighbors(s: &EpisodeState) -> Vec<GridCell> {
    let a = s.agent_cell();
    let order = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];
    order
        .iter()
        .filter_map(|&(dr, dc)| a.shifted(dr, dc))
        .filter(|c| s.board().contains(*c) && !s.is_opened(*c))
        .collect()
}

fn argmax(xs: impl Iterator<Item = (GridCell, f64)>) -> Option<GridCell> {
    xs.fold(None, |best: Option<(GridCell, f64)>, (c, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((c, v)),
    })
    .map(|(c, _)| c)
}

#[test]
fn b8_picks_brute_force_best_positive_neighbor() {
    let mut not_actionable = 0;
    for i in 0..300 {
        let s = situation(i);
        let expect = argmax(
            unopened_neighbors(&s.state)
                .into_iter()
                .map(|c| (c, score(&s.model, &padded(&s.fm, c))))
                .filter(|&(_, v)| v > 0.0),
        );
        match b8_action(&s.model, &s.state, &s.fm) {
            Ok(d) => assert_eq!(d.target, expect, "situation {i}"),
            Err(_) => {
                assert_eq!(expect, None, "situation {i}");
                not_actionable += 1;
            }
        }
    }
    assert!(not_actionable < 300);
}

#[test]
fn be_picks_brute_force_frontier_argmax() {
    for i in 0..300 {
        let s = situation(i);
        let board = s.state.board();
        let frontier = board.cells().filter(|c| !s.state.is_opened(*c) && board.neighbors(*c).any(|n| s.state.is_opened(n)));
        let expect = argmax(frontier.map(|c| (c, score(&s.model, &padded(&s.fm, c)))));
        let d = be_action(&s.model, &s.state, &s.fm).unwrap();
        assert_eq!(d.target, expect, "situation {i}");
    }
}

#[test]
fn heuristic_picks_highest_unopened_neighbor() {
    for i in 0..300 {
        let s = situation(i);
        let expect = argmax(unopened_neighbors(&s.state).into_iter().map(|c| (c, s.fm.at(c))));
        let d = heuristic_action(&s.state, &s.fm).unwrap();
        assert_eq!(d.target, expect, "situation {i}");
    }
}
