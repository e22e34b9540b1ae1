"""Scikit-learn style wrapper around the long-term design loop.

``fit`` takes the statistical CSI of one deployment and learns the transmit
APV and covariances; ``predict`` places the receive antennas for a batch of
channel samples; ``score`` is the average sum rate on such a batch.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .channel import Link, StatisticalState, draw_statistical_state
from .config import SystemConfig
from .two_timescale import SchemeId, draw_links, evaluate_design, run_scheme

__all__ = ["TwoTimescaleDesign"]


class TwoTimescaleDesign(BaseEstimator):
    """Long-term design of one scheme.

    Parameters
    ----------
    scheme : str
        One of ``proposed-gmm``, ``proposed-pmm``, ``decoupled-gmm``,
        ``scsit-gmm``, ``scsit-upa``.
    config : SystemConfig or None
        System parameters; None uses the defaults.
    random_state : int, Generator or None
        Seeds the training mini-batches.
    record_trace : bool
        Keep the per-iteration record in ``trace_``.
    """

    def __init__(self, scheme="proposed-gmm", config=None, random_state=None, record_trace=True):
        self.scheme = scheme
        self.config = config
        self.random_state = random_state
        self.record_trace = record_trace

    def _config(self) -> SystemConfig:
        return SystemConfig() if self.config is None else self.config

    def fit(self, X: StatisticalState, y=None, trace_links: Link | None = None):
        """Run the long-term loop on the statistical CSI ``X``.

        ``trace_links`` optionally records the average sum rate on a fixed
        sample batch after every iteration (``trace_["eval_sum_rate"]``).
        """
        if not isinstance(X, StatisticalState):
            raise TypeError("fit expects a StatisticalState")
        cfg = self._config()
        scheme = SchemeId.parse(self.scheme)
        rng = np.random.default_rng(self.random_state)
        sol = run_scheme(scheme, X, cfg, rng=rng, trace_links=trace_links)
        self.solution_ = sol
        self.statistics_ = X
        self.transmit_ = sol.t
        self.covariance_ = sol.Q
        self.receive_ = sol.r
        self.n_iter_ = sol.n_iter
        self.trace_ = sol.trace if self.record_trace else {}
        return self

    def sample_links(self, n_samples: int, random_state=None) -> Link:
        """Draw ``n_samples`` channel samples from the fitted statistics."""
        check_is_fitted(self, "solution_")
        rng = np.random.default_rng(random_state)
        return draw_links(self.statistics_, rng, n_samples, self._config())

    def _evaluate(self, links: Link) -> dict:
        check_is_fitted(self, "solution_")
        if not isinstance(links, Link):
            raise TypeError("expected a Link batch with gains shaped (S, K, L)")
        if np.ndim(links.gains) != 3:
            raise ValueError("expected a Link batch with gains shaped (S, K, L)")
        return evaluate_design(self.solution_, links, self._config())

    def predict(self, X: Link) -> np.ndarray:
        """Receive APVs ``(S, K, M, 2)`` for the channel samples ``X``."""
        return self._evaluate(X)["receive"]

    def predict_rates(self, X: Link) -> np.ndarray:
        """Per-user rates ``(S, K)`` with the receive APVs of :meth:`predict`."""
        return self._evaluate(X)["rates"]

    def score(self, X: Link, y=None) -> float:
        """Average sum rate (bits/s/Hz) over the channel samples ``X``."""
        return float(self.predict_rates(X).sum(axis=1).mean())

    @staticmethod
    def draw_statistics(config: SystemConfig, random_state=None) -> StatisticalState:
        """Statistical CSI of a random deployment under ``config``."""
        return draw_statistical_state(config, np.random.default_rng(random_state))

