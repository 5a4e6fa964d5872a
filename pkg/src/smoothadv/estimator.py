"""scikit-learn compatible front end for curriculum adversarial training."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attack import AttackConfig, pgd
from .curriculum import CurriculumConfig, Schedule
from .data import Dataset
from .hessian import ProbeConfig
from .network import NetworkSpec, predict_proba
from .trainer import TrainConfig, derive_seed, evaluate, train


class SmoothAdversarialClassifier(ClassifierMixin, BaseEstimator):
    """ReLU MLP trained with PGD adversarial training and an optional curriculum.

    ``curriculum`` selects the difficulty metric: ``"none"`` (plain
    adversarial training), ``"prob_gap"`` (probability-gap curriculum) or
    ``"hessian_score"`` (fraction of lowest-curvature samples perturbed).
    ``schedule`` is a :class:`~smoothadv.curriculum.Schedule` or its dict
    form; ``None`` means a constant 1.

    Inputs must already lie in ``[clip_min, clip_max]``. After ``fit`` the
    estimator exposes ``params_`` (early-stopped by adversarial accuracy on
    the validation data), ``history_`` and ``best_epoch_``.
    """

    def __init__(self, hidden_layer_sizes=(64,), curriculum="none", schedule=None,
                 epsilon=0.3, step_size=0.02, steps=10, random_init=True, restarts=1,
                 clip_min=0.0, clip_max=1.0, eval_steps=None, eval_restarts=1,
                 epochs=10, batch_size=128, lr=0.01, lr_decay=(), momentum=0.9,
                 weight_decay=5e-4, hessian_subbatch=32, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.curriculum = curriculum
        self.schedule = schedule
        self.epsilon = epsilon
        self.step_size = step_size
        self.steps = steps
        self.random_init = random_init
        self.restarts = restarts
        self.clip_min = clip_min
        self.clip_max = clip_max
        self.eval_steps = eval_steps
        self.eval_restarts = eval_restarts
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.hessian_subbatch = hessian_subbatch
        self.random_state = random_state

    def _attack(self, steps=None, restarts=1):
        return AttackConfig(self.epsilon, self.step_size, self.steps if steps is None else steps,
                            self.random_init, restarts, self.clip_min, self.clip_max)

    def _schedule(self):
        if self.schedule is None:
            return Schedule()
        if isinstance(self.schedule, Schedule):
            return self.schedule
        return Schedule.from_dict(self.schedule)

    def _train_config(self, n_inputs, n_classes):
        seed = int(self.random_state or 0)
        spec = NetworkSpec((n_inputs, *self.hidden_layer_sizes, n_classes), seed)
        return TrainConfig(
            spec=spec, attack=self._attack(),
            curriculum=CurriculumConfig(self.curriculum, self._schedule(),
                                        ProbeConfig(hessian_subbatch=self.hessian_subbatch)),
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            lr_decay=tuple(self.lr_decay), momentum=self.momentum,
            weight_decay=self.weight_decay, seed=seed,
            eval_attack=self._attack(self.eval_steps, self.eval_restarts))

    def _encode(self, y):
        idx = np.searchsorted(self.classes_, y)
        if np.any(idx >= len(self.classes_)) or np.any(self.classes_[np.minimum(idx, len(self.classes_) - 1)] != y):
            raise ValueError("y contains labels not seen during fit")
        return idx

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X.shape[1]
        labels = self._encode(y)
        train_set = Dataset(X, labels, len(self.classes_))
        if X_val is None:
            val_set = train_set
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
            val_set = Dataset(X_val, self._encode(y_val), len(self.classes_))
        self.config_ = self._train_config(X.shape[1], len(self.classes_))
        result = train(self.config_, train_set, val_set)
        self.spec_ = self.config_.spec
        self.params_ = result.best_params
        self.final_params_ = result.final_params
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return predict_proba(self.params_, self.spec_, X)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def perturb(self, X, y):
        """PGD adversarial examples for ``(X, y)`` under the evaluation attack."""
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y, dtype=np.float64)
        rng = np.random.default_rng(derive_seed(int(self.random_state or 0), "perturb"))
        return pgd(self.params_, self.spec_, X, self._encode(y), self.config_.evaluation_attack,
                   rng).x_adv

    def adversarial_score(self, X, y):
        """Dict with clean accuracy, PGD accuracy and their sum."""
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y, dtype=np.float64)
        ds = Dataset(X, self._encode(y), len(self.classes_))
        rng = np.random.default_rng(derive_seed(int(self.random_state or 0), "score"))
        return evaluate(self.params_, self.spec_, ds, self.config_.evaluation_attack, rng)
