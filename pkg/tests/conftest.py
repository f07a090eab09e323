import numpy as np
import pytest
import torch

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_setup(tmp_path_factory):
    """A quickly trained 64 px model plus a matching config file, for CLI-level tests."""
    from rtseiz.detector import (MiniResNetConfig, TrainConfig, build_mini_resnet, class_weights,
                                 save_model, subsample_background, train)
    from rtseiz.pipeline import PipelineConfig, format_config, labeled_windows
    from rtseiz.synth import SynthConfig, generate_corpus

    root = tmp_path_factory.mktemp("small")
    cfg = PipelineConfig(image_size=64)
    corpus = generate_corpus(2, SynthConfig(duration_sec=150, n_seizures=2), seed=7)
    data = labeled_windows([(s.recording, s.reference) for s in corpus], cfg)
    data = subsample_background(data, 0.5, 0)
    model = build_mini_resnet(MiniResNetConfig(input_size=64, stem_channels=4,
                                               layer_widths=(4, 8, 8, 8), seed=0))
    result = train(model, data, class_weights(data.stats), TrainConfig(epochs=4, seed=0))
    model_path = root / "small.mrsn"
    save_model(result.model, model_path)
    cfg = cfg.replace(model_path=str(model_path))
    cfg_path = root / "small.cfg"
    cfg_path.write_text(format_config(cfg))
    return {"root": root, "cfg": cfg, "cfg_path": cfg_path, "model": result.model,
            "model_path": model_path}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
