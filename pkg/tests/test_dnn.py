import numpy as np
import pytest
import torch

from dnn.inference import QuantizedLeNet, calibrate, infer, published_accuracy, weight_code_histogram
from dnn.lenet import CHECKPOINT_MAGIC, LeNet, LeNetModel, load_checkpoint, save_checkpoint
from dnn.lut_ops import exact_lut, load_lut
from dnn.trainer import retrain, train_lenet
from utils.data_processor import DataProcessor
from utils.errors import DataFormatError, DomainError


@pytest.fixture
def datasets(synthetic_mnist):
    return DataProcessor.load_mnist_dir(synthetic_mnist, "train"), DataProcessor.load_mnist_dir(synthetic_mnist, "test")


@pytest.fixture
def calibrated(datasets):
    torch.manual_seed(0)
    model = LeNetModel(LeNet())
    train_set, _ = datasets
    model.quant_params = calibrate(model, DataProcessor.pad_images(train_set.images[:64]))
    return model


def _states_equal(left, right):
    a, b = left.state_dict(), right.state_dict()
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


@pytest.mark.parametrize("plus", [False, True])
def test_network_output_shape(plus):
    network = LeNet(plus=plus)
    assert network(torch.zeros(2, 1, 32, 32)).shape == (2, 10)
    assert [spec.name for spec in network.layers][-1] == "fc3"


def test_checkpoint_round_trip_is_byte_identical(tmp_path, calibrated):
    calibrated.training = {"seed": 3, "epochs": 1, "lr": 0.01}
    first = tmp_path / "first.ckpt"
    second = tmp_path / "second.ckpt"
    save_checkpoint(calibrated, str(first))
    assert first.read_bytes().startswith(CHECKPOINT_MAGIC)

    loaded = load_checkpoint(str(first))
    assert _states_equal(loaded.network, calibrated.network)
    assert loaded.quant_params == calibrated.quant_params
    assert loaded.training == calibrated.training

    save_checkpoint(loaded, str(second))
    assert second.read_bytes() == first.read_bytes()


def test_checkpoint_keeps_the_topology(tmp_path):
    path = tmp_path / "plus.ckpt"
    save_checkpoint(LeNetModel(LeNet(plus=True)), str(path))
    loaded = load_checkpoint(str(path))
    assert loaded.plus
    assert loaded.quant_params is None


def test_corrupt_checkpoints_are_rejected(tmp_path, calibrated):
    path = tmp_path / "model.ckpt"
    save_checkpoint(calibrated, str(path))
    raw = path.read_bytes()

    bad_magic = tmp_path / "bad_magic.ckpt"
    bad_magic.write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(DataFormatError):
        load_checkpoint(str(bad_magic))

    truncated = tmp_path / "truncated.ckpt"
    truncated.write_bytes(raw[:-100])
    with pytest.raises(DataFormatError):
        load_checkpoint(str(truncated))


def test_calibration_covers_every_tensor(calibrated):
    params = calibrated.quant_params
    assert params["input"].zero_point == 0
    for name in ("conv1", "conv2", "fc1", "fc2", "fc3"):
        assert f"{name}.weight" in params
        assert f"{name}.out" in params
    # Hidden activations follow a ReLU.
    assert params["conv1.out"].zero_point == 0


def test_exact_table_reproduces_the_integer_pipeline(datasets, calibrated):
    _, test_set = datasets
    codes = DataProcessor.pad_images(test_set.images[:20])
    qnet = QuantizedLeNet(calibrated)
    lut_trace, ref_trace = {}, {}
    lut_logits = qnet.forward(codes, exact_lut(), lut_trace)
    ref_logits = qnet.forward(codes, None, ref_trace)
    assert np.array_equal(lut_logits, ref_logits)
    assert lut_trace.keys() == ref_trace.keys()
    for name in ref_trace:
        assert np.array_equal(lut_trace[name], ref_trace[name]), name


def test_uncalibrated_model_cannot_run_integer_inference():
    with pytest.raises(DomainError):
        QuantizedLeNet(LeNetModel(LeNet()))


def test_exact_multiplier_has_no_accuracy_loss(datasets, calibrated):
    _, test_set = datasets
    result = infer(calibrated, test_set, exact_lut(), "exact")
    assert result.dal == 0.0
    assert result.n_images == 50
    assert len(result.per_class_accuracy) == 10
    assert result.correct == round(result.top1_accuracy * 50)


def test_approximate_inference_reports_its_loss(datasets, calibrated):
    _, test_set = datasets
    name, lut = load_lut("mul8x8_3")
    baseline = infer(calibrated, test_set, None, "exact").top1_accuracy
    result = infer(calibrated, test_set, lut, name, baseline_accuracy=baseline, threads=2, batch_size=16)
    assert result.multiplier == "mul8x8_3"
    assert result.dal == pytest.approx(100.0 * (baseline - result.top1_accuracy))


def test_code_histogram(datasets, calibrated):
    train_set, _ = datasets
    histogram = weight_code_histogram(
        calibrated, calibrated.quant_params, DataProcessor.pad_images(train_set.images[:10])
    )
    assert histogram["ranges"] == [[0, 31], [96, 159]]
    assert all(0.0 <= value <= 1.0 for value in histogram["weights"] + histogram["activations"])
    assert histogram["weight_codes"] == sum(p.numel() for n, p in calibrated.network.named_parameters()
                                            if n.endswith("weight"))


def test_training_is_deterministic(datasets):
    train_set, test_set = datasets
    first = train_lenet(train_set, epochs=1, lr=0.01, seed=5, batch_size=32, test_set=test_set)
    second = train_lenet(train_set, epochs=1, lr=0.01, seed=5, batch_size=32)
    assert _states_equal(first.network, second.network)
    assert first.training["seed"] == 5
    assert "test_accuracy" in first.training


def test_training_needs_an_epoch(datasets):
    train_set, _ = datasets
    with pytest.raises(DomainError):
        train_lenet(train_set, epochs=0, lr=0.01)


def test_weight_decay_shrinks_weights(datasets):
    train_set, _ = datasets
    plain = train_lenet(train_set, epochs=1, lr=0.01, seed=1, batch_size=32)
    decayed = train_lenet(train_set, epochs=1, lr=0.01, l2=1.0, seed=1, batch_size=32)
    assert decayed.weight_l2() < plain.weight_l2()


def test_retraining_without_epochs_is_the_identity(datasets, calibrated):
    train_set, _ = datasets
    assert retrain(calibrated, exact_lut(), train_set, epochs=0, l2=0.0) is calibrated


def test_retraining_never_loses_holdout_accuracy(datasets):
    train_set, _ = datasets
    model = train_lenet(train_set, epochs=1, lr=0.01, seed=2, batch_size=32)
    _, lut = load_lut("mul8x8_3")
    retrained = retrain(model, lut, train_set, epochs=1, l2=1e-4, seed=2, calib_size=64, batch_size=32,
                        multiplier="mul8x8_3")
    record = retrained.training["retrain"]
    assert record["multiplier"] == "mul8x8_3"
    assert record["holdout_accuracy_after"] >= record["holdout_accuracy_before"]
    assert retrained.quant_params is not None



def test_retraining_can_select_on_a_separate_holdout(datasets):
    train_set, test_set = datasets
    model = train_lenet(train_set, epochs=1, lr=0.01, seed=2, batch_size=32)
    _, lut = load_lut("mul8x8_1")
    retrained = retrain(model, lut, train_set, epochs=1, l2=1e-4, seed=2, calib_size=64, batch_size=32,
                        multiplier="mul8x8_1", holdout_set=test_set)
    record = retrained.training["retrain"]
    assert record["holdout_source"] == "separate holdout set"
    assert record["holdout_size"] == 50
    assert record["holdout_fraction"] is None
    assert record["holdout_accuracy_after"] >= record["holdout_accuracy_before"]


def test_default_holdout_is_a_training_split(datasets):
    train_set, _ = datasets
    model = train_lenet(train_set, epochs=1, lr=0.01, seed=3, batch_size=32)
    retrained = retrain(model, exact_lut(), train_set, epochs=1, l2=0.0, seed=3, calib_size=64, batch_size=32)
    assert retrained.training["retrain"]["holdout_source"] == "training split"
    assert retrained.training["retrain"]["holdout_size"] == 20


def test_published_accuracy_lookup():
    assert published_accuracy("mul8x8_1") == pytest.approx(0.9898)
    assert published_accuracy("mul8x8_3", regularized=True) == pytest.approx(0.9912)
    assert published_accuracy("exact", plus=True) == pytest.approx(0.9951)
    assert published_accuracy("custom") is None


def test_results_carry_the_published_values(datasets, calibrated):
    _, test_set = datasets
    name, lut = load_lut("mul8x8_1")
    result = infer(calibrated, test_set, lut, name, baseline_accuracy=0.5)
    assert result.published_accuracy == pytest.approx(0.9898)
    assert result.published_dal == pytest.approx(0.34)

    exact = infer(calibrated, test_set, exact_lut(), "exact")
    assert exact.published_dal == 0.0
    assert infer(calibrated, test_set, lut, "my-design", baseline_accuracy=0.5).published_accuracy is None


@pytest.fixture(scope="module")
def mnist_lenet(mnist_dir):
    """Plain LeNet trained on MNIST with a holdout carved out before training"""
    full_train = DataProcessor.load_mnist_dir(mnist_dir, "train")
    test_set = DataProcessor.load_mnist_dir(mnist_dir, "test")
    fit_set, holdout = DataProcessor.stratified_holdout(full_train, 0.1, 0)
    model = train_lenet(fit_set, epochs=10, lr=0.01, seed=0, test_set=test_set)
    model.quant_params = calibrate(model, DataProcessor.pad_images(fit_set.images[:1000]))
    exact = infer(model, test_set, exact_lut(), "exact", threads=4)
    return {"model": model, "fit": fit_set, "holdout": holdout, "test": test_set, "exact": exact}


@pytest.fixture(scope="module")
def mnist_variants(mnist_lenet):
    results = {}
    for name in ("mul8x8_1", "mul8x8_2", "mul8x8_3"):
        _, lut = load_lut(name)
        results[name] = (lut, infer(mnist_lenet["model"], mnist_lenet["test"], lut, name,
                                    baseline_accuracy=mnist_lenet["exact"].top1_accuracy, threads=4))
    return results


@pytest.mark.slow
def test_lenet_accuracy_loss_on_mnist(mnist_lenet, mnist_variants):
    assert mnist_lenet["exact"].top1_accuracy >= 0.985
    assert mnist_lenet["exact"].n_images == 10000

    dal = {name: result.dal for name, (_, result) in mnist_variants.items()}
    assert dal["mul8x8_2"] <= 0.3
    assert dal["mul8x8_2"] <= dal["mul8x8_1"]
    assert dal["mul8x8_2"] <= dal["mul8x8_3"]


@pytest.mark.slow
def test_exact_table_is_bit_identical_on_the_mnist_test_set(mnist_lenet):
    qnet = QuantizedLeNet(mnist_lenet["model"])
    codes = DataProcessor.pad_images(mnist_lenet["test"].images)
    for start in range(0, len(codes), 500):
        batch = codes[start:start + 500]
        assert np.array_equal(qnet.forward(batch, exact_lut()), qnet.forward(batch, None)), start


@pytest.mark.slow
def test_retraining_the_worst_design_keeps_its_accuracy(mnist_lenet, mnist_variants):
    name = max(mnist_variants, key=lambda key: mnist_variants[key][1].dal)
    lut, before = mnist_variants[name]
    retrained = retrain(mnist_lenet["model"], lut, mnist_lenet["fit"], epochs=2, l2=1e-4, seed=0,
                        multiplier=name, threads=4, holdout_set=mnist_lenet["holdout"])
    record = retrained.training["retrain"]
    assert record["holdout_source"] == "separate holdout set"
    assert record["holdout_accuracy_after"] >= record["holdout_accuracy_before"]

    after = infer(retrained, mnist_lenet["test"], lut, name,
                  baseline_accuracy=mnist_lenet["exact"].top1_accuracy, threads=4)
    assert after.top1_accuracy >= before.top1_accuracy
