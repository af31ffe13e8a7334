"""
germlab - テスト共通のフィクスチャ
"""

import json
import random

import pytest

from germlab.core.coefficients import EXACT, FloatBackend
from germlab.core.crsing import ELLIPTIC, InvolutionPair, NormalBlock
from germlab.core.series import GermMap, TruncatedSeries, compose, invert_germ, monomials_up_to, unit
from germlab.utils.settings import SettingsManager


@pytest.fixture
def exact():
    return EXACT


@pytest.fixture
def floating():
    return FloatBackend()


@pytest.fixture
def rng():
    return random.Random(20240611)


def random_tangent_germ(rng, n, truncation, backend=EXACT, max_degree=None, density=0.4):
    """恒等写像に接する疎な芽 Id + (2 次以上の小さな有理係数)"""
    max_degree = max_degree or truncation
    components = []
    for j in range(n):
        terms = {unit(n, j): 1}
        for Q in monomials_up_to(n, max_degree, 2):
            if rng.random() < density:
                numerator = rng.choice([-3, -2, -1, 1, 2, 3])
                terms[Q] = f"{numerator}/{rng.randint(1, 4)}"
        components.append(TruncatedSeries(n, truncation, backend, terms))
    return GermMap(components)


def planted_map(psi0, diagonal):
    """Ψ0∘D∘Ψ0^{-1} (Φ = Ψ0 が線形化写像になる)"""
    D = GermMap.from_matrix(
        [[diagonal[r] if r == c else 0 for c in range(len(diagonal))] for r in range(len(diagonal))],
        psi0.truncation,
        psi0.backend,
    )
    return compose(psi0, compose(D, invert_germ(psi0)))


@pytest.fixture
def germ_builder():
    return random_tangent_germ


@pytest.fixture
def planted():
    return planted_map


@pytest.fixture
def elliptic_pair():
    """μ = 1/4, ρ の作用 A = (2) の楕円型ブロック 1 つの線形な正規形"""
    return InvolutionPair.from_normal_form([NormalBlock(ELLIPTIC, "1/4", A=[["2"]])], 0, 4, EXACT)


@pytest.fixture
def settings_dir(tmp_path):
    return tmp_path / "settings"


@pytest.fixture
def isolated_settings(settings_dir):
    """ホームディレクトリの設定ファイルを読まない SettingsManager"""
    return SettingsManager(settings_dir)


@pytest.fixture
def write_manifest(tmp_path):
    def write(data, name="manifest.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data, ensure_ascii=False), encoding="utf-8")
        return path

    return write
