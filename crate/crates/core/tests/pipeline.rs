use rbfimpute::data::{
    inject_random, load_pair, lorenz96, save_pair, GroundTruthPair, Lorenz96Config,
};
use rbfimpute::eval::{evaluate, mean_baseline};
use rbfimpute::grbf::{load_bank, save_bank};
use rbfimpute::mim::{fit, TrainConfig};
use rbfimpute::mirnn::{fit_mirnn, impute_mirnn, load_model, save_model, MirnnConfig};

fn pair() -> GroundTruthPair {
    let s = lorenz96(&Lorenz96Config {
        n: 120,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    inject_random(&s, 0.3, 4).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        k_per_stage: 16,
        max_stages: 4,
        epochs_per_stage: 400,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn stages_reduce_observed_error_and_beat_mean() {
    let pair = pair();
    let out = fit(&pair.corrupted, &quick()).unwrap();
    assert!(out.reports.len() > 1);
    for w in out.reports.windows(2) {
        assert!(
            w[1].mae <= w[0].mae,
            "stage {} raised observed MAE {} -> {}",
            w[1].stage,
            w[0].mae,
            w[1].mae
        );
    }
    let names = pair.corrupted.variable_names();
    let imputed = out.function.impute(&pair.corrupted).unwrap();
    let mim = evaluate(imputed.values(), &pair.truth, &pair.eval_mask, names).unwrap();
    let mean = mean_baseline(&pair.corrupted).unwrap();
    let mean = evaluate(mean.values(), &pair.truth, &pair.eval_mask, names).unwrap();
    assert!(
        mim.pooled.mae < mean.pooled.mae,
        "{} vs {}",
        mim.pooled.mae,
        mean.pooled.mae
    );
}

#[test]
fn files_round_trip_through_both_models() {
    let dir = tempfile::tempdir().unwrap();
    let pair = pair();
    save_pair(&pair, dir.path()).unwrap();
    let pair = load_pair(dir.path()).unwrap();

    let cf = fit(&pair.corrupted, &quick()).unwrap().function;
    let bank_path = dir.path().join("bank.json");
    save_bank(&cf, &bank_path).unwrap();
    let cf2 = load_bank(&bank_path).unwrap();
    assert_eq!(
        cf.impute(&pair.corrupted).unwrap(),
        cf2.impute(&pair.corrupted).unwrap()
    );

    let cfg = MirnnConfig {
        hidden_size: 8,
        window_len: 24,
        epochs: 3,
        ..Default::default()
    };
    let (model, _) = fit_mirnn(&pair.corrupted, &cf2, &cfg).unwrap();
    let model_path = dir.path().join("model.json");
    save_model(&model, &model_path).unwrap();
    let model2 = load_model(&model_path).unwrap();
    let a = impute_mirnn(&model, &pair.corrupted, &cf).unwrap();
    let b = impute_mirnn(&model2, &pair.corrupted, &cf2).unwrap();
    assert_eq!(a.values(), b.values());
}
