import pytest

from arscr import data as D
from arscr.model import ModelConfig

TINY = ModelConfig(conv_channels=(6, 8), hidden=6, attention_dim=6, num_classes=4)


@pytest.fixture(scope="session")
def tiny_source(tmp_path_factory):
    """Four short tone classes; clips of 4000 samples give 23 mel frames."""
    protos = (D.Prototype("a", 500.0), D.Prototype("b", 1200.0, 400.0, "attack"),
              D.Prototype("c", 2200.0, -500.0, "decay"), D.Prototype("d", 3300.0))
    spec = D.SynthSpec(protos, noise=0.05, length=4000, counts=(40, 3, 6), seed=11, active=0.15)
    return D.load_task(D.generate_synthetic(spec, tmp_path_factory.mktemp("tiny_src")), length=4000)


@pytest.fixture(scope="session")
def tiny_target(tmp_path_factory):
    protos = (D.Prototype("t0", 520.0), D.Prototype("t1", 2150.0, -450.0, "decay"))
    spec = D.SynthSpec(protos, noise=0.05, length=4000, counts=(8, 2, 6), seed=12, active=0.15)
    return D.load_task(D.generate_synthetic(spec, tmp_path_factory.mktemp("tiny_tgt")), length=4000)


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_source):
    from arscr.training import TrainConfig, pretrain_source
    params, report = pretrain_source(tiny_source, TrainConfig(epochs=20, lr_am=5e-3, model=TINY))
    return params, report


# ---------------------------------------------------------------- acceptance verdicts

VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one ``PASS``/``FAIL`` line; they are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(VERDICTS, [])

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
