use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsa_nn::{gradient_check, ArchitectureDescriptor, BranchSpec, Branches, LossSpec, Mode, Model};

const TOL: f64 = 1e-4;

fn batch(n: usize, dim: usize, classes: u32, seed: u64) -> (Array2<f64>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-2.0..2.0));
    let y = (0..n).map(|i| i as u32 % classes).collect();
    (x, y)
}

fn mlp(hidden: &[usize], bn: bool, dropout: f64) -> ArchitectureDescriptor {
    let mut d = ArchitectureDescriptor::mlp(hidden);
    d.batch_norm = bn;
    d.dropout = dropout;
    d.seed = 11;
    d
}

fn multi_branch(attention: bool) -> ArchitectureDescriptor {
    let mut d = ArchitectureDescriptor::reference_multi_branch();
    d.branches = Some(Branches {
        temporal: BranchSpec::new(&[6, 5]),
        spatial: BranchSpec::new(&[4]),
        frequency: BranchSpec::new(&[3]),
    });
    d.fusion_dim = 6;
    d.attention.enabled = attention;
    d.attention.heads = 2;
    d.head = vec![5, 3];
    d.dropout = 0.0;
    d.seed = 5;
    d
}

fn check(desc: &ArchitectureDescriptor, dim: usize, classes: usize, spec: LossSpec, mode: Mode, weights: Option<&[f64]>) {
    let mut model: Model<f64> = Model::instantiate(desc, dim, classes).unwrap();
    let (x, y) = batch(10, dim, classes as u32, 3);
    if mode == Mode::Eval {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in 0..3 {
            let (xb, _) = batch(16, dim, classes as u32, 100 + s);
            model.forward(&xb, Mode::Train, &mut rng).unwrap();
        }
    }
    let report = gradient_check(&mut model, &x, &y, &spec, weights, mode, 7, 40).unwrap();
    assert!(report.checked > 20);
    assert!(report.max_rel_error <= TOL, "{:?} {:?}: {} at {}", desc.family, spec, report.max_rel_error, report.worst);
}

#[test]
fn linear_stack_with_cross_entropy() {
    check(&mlp(&[7, 5], false, 0.0), 4, 3, LossSpec::Ce, Mode::Train, None);
}

#[test]
fn batch_norm_in_training_mode() {
    check(&mlp(&[7, 5], true, 0.0), 4, 3, LossSpec::Ce, Mode::Train, None);
}

#[test]
fn batch_norm_with_running_statistics() {
    check(&mlp(&[6], true, 0.0), 4, 3, LossSpec::Ce, Mode::Eval, None);
}

#[test]
fn dropout_with_fixed_masks() {
    check(&mlp(&[8, 6], true, 0.3), 4, 2, LossSpec::Ce, Mode::Train, None);
}

#[test]
fn dropout_off_in_eval() {
    check(&mlp(&[8, 6], true, 0.3), 4, 2, LossSpec::Ce, Mode::Eval, None);
}

#[test]
fn weighted_cross_entropy() {
    check(&mlp(&[6], true, 0.0), 5, 3, LossSpec::WeightedCe, Mode::Train, Some(&[0.4, 1.7, 0.9]));
}

#[test]
fn focal_loss() {
    check(&mlp(&[6], true, 0.0), 5, 3, LossSpec::Focal { alpha: 0.25, gamma: 2.0 }, Mode::Train, None);
}

#[test]
fn attention_block_binary_single_logit() {
    check(&multi_branch(true), 9, 2, LossSpec::Focal { alpha: 0.25, gamma: 2.0 }, Mode::Train, None);
}

#[test]
fn attention_block_multiclass() {
    check(&multi_branch(true), 9, 4, LossSpec::Ce, Mode::Train, None);
}

#[test]
fn multi_branch_without_attention() {
    check(&multi_branch(false), 9, 3, LossSpec::WeightedCe, Mode::Train, Some(&[1.0, 2.0, 0.5]));
}
