"""Fusion encoder / attention decoder network and its gradients.

The model is small enough that an explicit numpy implementation beats
a framework here: float64 end to end, deterministic reductions, and a
backward pass that a finite-difference check can hold to 1e-6.

Layout conventions
------------------
Gated-recurrent weights pack the three gates column-wise as
``[update | reset | candidate]``; state update is
``h' = (1 - z) * h + z * tanh(...)``. The decoder consumes
``[prev-token embedding ; attention context]`` and the output layer
sees ``[prev-token embedding ; context ; new state]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EOS_ID, PAD_ID, SOS_ID, TURN_A_ID, TURN_B_ID, WindowSample
from .errors import NumericError


@dataclass(frozen=True)
class HyperParams:
    hidden_size: int = 256
    word_embed_size: int = 256
    acoustic_embed_size: int = 256
    attention_size: int = 64
    n_cepstra_in: int = 13
    teacher_forcing_ratio: float = 0.5
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_decode_length: int = 64
    feature_mode: str = "WM"  # "W" lexical only, "WM" lexical + acoustic
    seed: int = 0
    grad_clip: float = 5.0

    def __post_init__(self):
        if self.word_embed_size != self.acoustic_embed_size:
            raise ValueError("word and acoustic embedding sizes must match")
        if self.feature_mode not in ("W", "WM"):
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")


@dataclass
class ModelParams:
    """Named parameter tensors; iteration order is the serialization order."""

    feature_mode: str
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def check_finite(self):
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericError(f"parameter tensor {name} has non-finite entries")


def init_params(hyper: HyperParams, vocab_size: int,
                rng: np.random.Generator | None = None) -> ModelParams:
    """Uniform(-0.08, 0.08) weights, zero biases, seeded from the hyperparams."""
    if rng is None:
        rng = np.random.default_rng(hyper.seed)
    e, h, a = hyper.word_embed_size, hyper.hidden_size, hyper.attention_size
    enc_in = 2 * e if hyper.feature_mode == "WM" else e

    def u(*shape):
        return rng.uniform(-0.08, 0.08, size=shape)

    t: dict[str, np.ndarray] = {}
    t["emb"] = u(vocab_size, e)
    if hyper.feature_mode == "WM":
        t["ac_w"] = u(hyper.n_cepstra_in, e)
        t["ac_b"] = np.zeros(e)
    t["enc_wx"] = u(enc_in, 3 * h)
    t["enc_uh"] = u(h, 3 * h)
    t["enc_b"] = np.zeros(3 * h)
    t["att_wq"] = u(h, a)
    t["att_wk"] = u(h, a)
    t["att_v"] = u(a)
    t["att_b"] = np.zeros(a)
    t["dec_wx"] = u(e + h, 3 * h)
    t["dec_uh"] = u(h, 3 * h)
    t["dec_b"] = np.zeros(3 * h)
    t["out_w"] = u(e + 2 * h, vocab_size)
    t["out_b"] = np.zeros(vocab_size)
    return ModelParams(feature_mode=hyper.feature_mode, tensors=t)


def zeros_like_params(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors.items()}


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# ---------------------------------------------------------------------------
# Token-level loss with speaker-grouping invariance
# ---------------------------------------------------------------------------


def flip_tokens(ids) -> tuple[int, ...]:
    """Swap the two turn-token identities; everything else unchanged."""
    swap = {TURN_A_ID: TURN_B_ID, TURN_B_ID: TURN_A_ID}
    return tuple(swap.get(t, t) for t in ids)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits: np.ndarray, targets) -> float:
    """Mean token-level cross entropy of one sequence."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[0] != targets.shape[0]:
        raise ValueError("logit sequence and target lengths differ")
    lp = _log_softmax(logits)
    return float(-lp[np.arange(targets.size), targets].mean())


def flip_invariant_loss(logits: np.ndarray, target_ids) -> float:
    """min(CE against the target, CE against the turn-flipped target)."""
    return min(cross_entropy(logits, target_ids),
               cross_entropy(logits, flip_tokens(target_ids)))


def flip_invariant_choice(logits: np.ndarray, target_ids) -> tuple[float, bool]:
    """Loss plus whether the flipped labeling was the strictly smaller one."""
    orig = cross_entropy(logits, target_ids)
    flip = cross_entropy(logits, flip_tokens(target_ids))
    return (flip, True) if flip < orig else (orig, False)


# ---------------------------------------------------------------------------
# Batched forward/backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    """Everything the backward pass needs, per batch."""

    src_ids: np.ndarray          # (B, T) int
    acoustic: np.ndarray | None  # (B, T, 13)
    enc_x: np.ndarray            # (B, T, I)
    enc_h: np.ndarray            # (B, T+1, H), [:,0] = 0
    enc_z: np.ndarray            # (B, T, H)
    enc_r: np.ndarray
    enc_c: np.ndarray
    kw: np.ndarray               # (B, T, A) keys through att_wk
    prev_ids: np.ndarray         # (B, L) decoder input tokens
    dec_s: np.ndarray            # (B, L+1, H), [:,0] = encoder final
    dec_z: np.ndarray
    dec_r: np.ndarray
    dec_c: np.ndarray
    qa: np.ndarray               # (B, L, A) queries through att_wq
    alpha: np.ndarray            # (B, L, T)
    ctx: np.ndarray              # (B, L, H)
    logits: np.ndarray           # (B, L, V)


class Seq2Seq:
    """Parameter bundle plus the forward/backward/decode machinery."""

    def __init__(self, params: ModelParams, hyper: HyperParams):
        self.params = params
        self.hyper = hyper

    # -- encoder ------------------------------------------------------------

    def _encoder_inputs(self, src_ids: np.ndarray, acoustic: np.ndarray | None) -> np.ndarray:
        t = self.params.tensors
        emb = t["emb"][src_ids]  # (B, T, E)
        if self.params.feature_mode == "W":
            return emb
        proj = acoustic @ t["ac_w"] + t["ac_b"]
        return np.concatenate([emb, proj], axis=2)

    def _gru_forward(self, x_pre: np.ndarray, h0: np.ndarray, uh: np.ndarray):
        """Run a gated-recurrent cell over time given precomputed x@Wx + b.

        x_pre: (B, T, 3H). Returns h (B, T+1, H) and gate caches.
        """
        b, t_len, _ = x_pre.shape
        h_dim = uh.shape[0]
        h = np.empty((b, t_len + 1, h_dim))
        h[:, 0] = h0
        zs = np.empty((b, t_len, h_dim))
        rs = np.empty((b, t_len, h_dim))
        cs = np.empty((b, t_len, h_dim))
        uh_zr, uh_c = uh[:, : 2 * h_dim], uh[:, 2 * h_dim :]
        for i in range(t_len):
            hp = h[:, i]
            zr = _sigmoid(x_pre[:, i, : 2 * h_dim] + hp @ uh_zr)
            z, r = zr[:, :h_dim], zr[:, h_dim:]
            c = np.tanh(x_pre[:, i, 2 * h_dim :] + (r * hp) @ uh_c)
            h[:, i + 1] = (1.0 - z) * hp + z * c
            zs[:, i], rs[:, i], cs[:, i] = z, r, c
        return h, zs, rs, cs

    def encode_batch(self, src_ids: np.ndarray, acoustic: np.ndarray | None):
        t = self.params.tensors
        x = self._encoder_inputs(np.asarray(src_ids), acoustic)
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite encoder input")
        x_pre = x @ t["enc_wx"] + t["enc_b"]
        h0 = np.zeros((x.shape[0], t["enc_uh"].shape[0]))
        h, zs, rs, cs = self._gru_forward(x_pre, h0, t["enc_uh"])
        return x, h, zs, rs, cs

    # -- attention ----------------------------------------------------------

    def _attend(self, s: np.ndarray, keys: np.ndarray, kw: np.ndarray):
        """Additive attention of one decoder state over the encoder states."""
        t = self.params.tensors
        qa = s @ t["att_wq"]  # (B, H)
        u = np.tanh(qa[:, None, :] + kw + t["att_b"])
        e = u @ t["att_v"]  # (B, T)
        e -= e.max(axis=1, keepdims=True)
        w = np.exp(e)
        alpha = w / w.sum(axis=1, keepdims=True)
        ctx = np.einsum("bt,bth->bh", alpha, keys)
        return qa, alpha, ctx

    # -- full teacher-forced / self-fed pass ---------------------------------

    def forward_batch(
        self,
        src_ids: np.ndarray,
        acoustic: np.ndarray | None,
        prev_teacher: np.ndarray,
        self_feed: np.ndarray | None = None,
    ) -> ForwardCache:
        """Run encoder and decoder for L = prev_teacher.shape[1] steps.

        ``prev_teacher[b, i]`` is the token fed at step i under teacher
        forcing; rows where ``self_feed`` is True feed their own argmax
        from step i-1 instead (step 0 always feeds the start token).
        """
        t = self.params.tensors
        h_dim = self.hyper.hidden_size
        enc_x, enc_h, enc_z, enc_r, enc_c = self.encode_batch(src_ids, acoustic)
        keys = enc_h[:, 1:]
        kw = keys @ t["att_wk"]

        b, l_len = prev_teacher.shape
        v_size = t["out_w"].shape[1]
        if self_feed is None:
            self_feed = np.zeros(b, dtype=bool)

        prev_ids = np.empty((b, l_len), dtype=np.int64)
        dec_s = np.empty((b, l_len + 1, h_dim))
        dec_s[:, 0] = enc_h[:, -1]
        dec_z = np.empty((b, l_len, h_dim))
        dec_r = np.empty((b, l_len, h_dim))
        dec_c = np.empty((b, l_len, h_dim))
        qa_all = np.empty((b, l_len, t["att_wq"].shape[1]))
        alpha_all = np.empty((b, l_len, keys.shape[1]))
        ctx_all = np.empty((b, l_len, h_dim))
        logits = np.empty((b, l_len, v_size))

        uh = t["dec_uh"]
        uh_zr, uh_c = uh[:, : 2 * h_dim], uh[:, 2 * h_dim :]
        prev = np.full(b, SOS_ID, dtype=np.int64)
        for i in range(l_len):
            if i > 0:
                own = np.argmax(logits[:, i - 1], axis=1)
                prev = np.where(self_feed, own, prev_teacher[:, i - 1])
            prev_ids[:, i] = prev
            p = t["emb"][prev]
            s = dec_s[:, i]
            qa, alpha, ctx = self._attend(s, keys, kw)
            x = np.concatenate([p, ctx], axis=1)
            x_pre = x @ t["dec_wx"] + t["dec_b"]
            zr = _sigmoid(x_pre[:, : 2 * h_dim] + s @ uh_zr)
            z, r = zr[:, :h_dim], zr[:, h_dim:]
            c = np.tanh(x_pre[:, 2 * h_dim :] + (r * s) @ uh_c)
            s_new = (1.0 - z) * s + z * c
            dec_s[:, i + 1] = s_new
            dec_z[:, i], dec_r[:, i], dec_c[:, i] = z, r, c
            qa_all[:, i], alpha_all[:, i], ctx_all[:, i] = qa, alpha, ctx
            logits[:, i] = (
                np.concatenate([p, ctx, s_new], axis=1) @ t["out_w"] + t["out_b"]
            )

        return ForwardCache(
            src_ids=np.asarray(src_ids), acoustic=acoustic, enc_x=enc_x,
            enc_h=enc_h, enc_z=enc_z, enc_r=enc_r, enc_c=enc_c, kw=kw,
            prev_ids=prev_ids, dec_s=dec_s, dec_z=dec_z, dec_r=dec_r,
            dec_c=dec_c, qa=qa_all, alpha=alpha_all, ctx=ctx_all, logits=logits,
        )

    # -- loss ---------------------------------------------------------------

    def batch_loss(self, logits: np.ndarray, targets: np.ndarray, lengths: np.ndarray):
        """Grouping-invariant loss over a padded batch.

        targets: (B, L) ids padded with PAD_ID; lengths: (B,) valid counts.
        Returns (mean loss, dlogits, flipped mask). The gradient follows
        the smaller branch; exact ties follow the original labeling.
        """
        b, l_len, v_size = logits.shape
        lp = _log_softmax(logits)
        pos = np.arange(l_len)[None, :]
        valid = pos < lengths[:, None]
        flipped_t = _flip_array(targets)
        safe_t = np.where(valid, targets, PAD_ID)
        safe_f = np.where(valid, flipped_t, PAD_ID)
        bi = np.arange(b)[:, None]
        nll_o = -lp[bi, pos, safe_t] * valid
        nll_f = -lp[bi, pos, safe_f] * valid
        ce_o = nll_o.sum(axis=1) / lengths
        ce_f = nll_f.sum(axis=1) / lengths
        use_flip = ce_f < ce_o
        loss = float(np.where(use_flip, ce_f, ce_o).mean())

        chosen = np.where(use_flip[:, None], flipped_t, targets)
        grad = np.exp(lp)
        onehot_rows = np.zeros_like(grad)
        onehot_rows[bi, pos, np.where(valid, chosen, 0)] = 1.0
        grad -= onehot_rows
        grad *= (valid / lengths[:, None])[:, :, None] / b
        return loss, grad, use_flip

    # -- backward -----------------------------------------------------------

    def backward_batch(self, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        t = self.params.tensors
        h_dim = self.hyper.hidden_size
        e_dim = t["emb"].shape[1]
        b, l_len, _ = dlogits.shape
        t_len = cache.enc_h.shape[1] - 1
        keys = cache.enc_h[:, 1:]
        grads = zeros_like_params(self.params)

        # Output layer, all steps at once.
        o_in = np.concatenate(
            [t["emb"][cache.prev_ids], cache.ctx, cache.dec_s[:, 1:]], axis=2
        )
        grads["out_w"] = o_in.reshape(b * l_len, -1).T @ dlogits.reshape(b * l_len, -1)
        grads["out_b"] = dlogits.sum(axis=(0, 1))
        d_o_in = dlogits @ t["out_w"].T  # (B, L, E+2H)

        d_keys = np.zeros_like(keys)
        d_kw = np.zeros_like(cache.kw)
        dec_dpre = np.empty((b, l_len, 3 * h_dim))
        d_emb_rows = np.empty((b, l_len, e_dim))  # grads w.r.t. fed embeddings
        uh = t["dec_uh"]
        uh_zr, uh_c = uh[:, : 2 * h_dim], uh[:, 2 * h_dim :]
        wx = t["dec_wx"]
        att_v, att_wq, att_wk = t["att_v"], t["att_wq"], t["att_wk"]

        ds = np.zeros((b, h_dim))
        for i in range(l_len - 1, -1, -1):
            ds = ds + d_o_in[:, i, e_dim + h_dim :]
            s_prev = cache.dec_s[:, i]
            z, r, c = cache.dec_z[:, i], cache.dec_r[:, i], cache.dec_c[:, i]
            dz = ds * (c - s_prev)
            dc = ds * z
            ds_prev = ds * (1.0 - z)
            dc_in = dc * (1.0 - c * c)
            d_rh = dc_in @ uh_c.T
            dr = d_rh * s_prev
            ds_prev = ds_prev + d_rh * r
            dz_in = dz * z * (1.0 - z)
            dr_in = dr * r * (1.0 - r)
            dzr = np.concatenate([dz_in, dr_in], axis=1)
            ds_prev = ds_prev + dzr @ uh_zr.T
            dpre = np.concatenate([dzr, dc_in], axis=1)
            dec_dpre[:, i] = dpre
            dx = dpre @ wx.T  # (B, E+H)

            # Attention backward (recompute the tanh activation).
            dctx = d_o_in[:, i, e_dim : e_dim + h_dim] + dx[:, e_dim:]
            alpha = cache.alpha[:, i]
            dalpha = np.einsum("bh,bth->bt", dctx, keys)
            d_keys += alpha[:, :, None] * dctx[:, None, :]
            de = alpha * (dalpha - (dalpha * alpha).sum(axis=1, keepdims=True))
            u = np.tanh(cache.qa[:, i][:, None, :] + cache.kw + t["att_b"])
            grads["att_v"] += np.einsum("bt,bta->a", de, u)
            dpre_u = (de[:, :, None] * att_v) * (1.0 - u * u)
            dqa = dpre_u.sum(axis=1)
            grads["att_b"] += dpre_u.sum(axis=(0, 1))
            grads["att_wq"] += s_prev.T @ dqa
            d_kw += dpre_u
            ds = ds_prev + dqa @ att_wq.T

            d_emb_rows[:, i] = d_o_in[:, i, :e_dim] + dx[:, :e_dim]

        # Decoder weight gradients in two big reductions.
        dec_x = np.concatenate([t["emb"][cache.prev_ids], cache.ctx], axis=2)
        flat_dpre = dec_dpre.reshape(b * l_len, -1)
        grads["dec_wx"] = dec_x.reshape(b * l_len, -1).T @ flat_dpre
        grads["dec_b"] = flat_dpre.sum(axis=0)
        s_prev_all = cache.dec_s[:, :-1].reshape(b * l_len, h_dim)
        rh_all = (cache.dec_r * cache.dec_s[:, :-1]).reshape(b * l_len, h_dim)
        grads["dec_uh"][:, : 2 * h_dim] = s_prev_all.T @ flat_dpre[:, : 2 * h_dim]
        grads["dec_uh"][:, 2 * h_dim :] = rh_all.T @ flat_dpre[:, 2 * h_dim :]

        # Key projection.
        grads["att_wk"] = keys.reshape(b * t_len, h_dim).T @ d_kw.reshape(b * t_len, -1)
        d_keys += d_kw @ att_wk.T

        # Encoder backward; decoder initial state is the final encoder state.
        d_h = d_keys
        d_final = ds
        enc_uh = t["enc_uh"]
        enc_uh_zr, enc_uh_c = enc_uh[:, : 2 * h_dim], enc_uh[:, 2 * h_dim :]
        enc_dpre = np.empty((b, t_len, 3 * h_dim))
        carry = d_final
        for i in range(t_len - 1, -1, -1):
            dh = carry + d_h[:, i]
            hp = cache.enc_h[:, i]
            z, r, c = cache.enc_z[:, i], cache.enc_r[:, i], cache.enc_c[:, i]
            dz = dh * (c - hp)
            dc = dh * z
            carry = dh * (1.0 - z)
            dc_in = dc * (1.0 - c * c)
            d_rh = dc_in @ enc_uh_c.T
            dr = d_rh * hp
            carry = carry + d_rh * r
            dz_in = dz * z * (1.0 - z)
            dr_in = dr * r * (1.0 - r)
            dzr = np.concatenate([dz_in, dr_in], axis=1)
            carry = carry + dzr @ enc_uh_zr.T
            enc_dpre[:, i] = np.concatenate([dzr, dc_in], axis=1)

        flat_enc_dpre = enc_dpre.reshape(b * t_len, -1)
        grads["enc_wx"] = cache.enc_x.reshape(b * t_len, -1).T @ flat_enc_dpre
        grads["enc_b"] = flat_enc_dpre.sum(axis=0)
        hp_all = cache.enc_h[:, :-1].reshape(b * t_len, h_dim)
        rh_enc = (cache.enc_r * cache.enc_h[:, :-1]).reshape(b * t_len, h_dim)
        grads["enc_uh"][:, : 2 * h_dim] = hp_all.T @ flat_enc_dpre[:, : 2 * h_dim]
        grads["enc_uh"][:, 2 * h_dim :] = rh_enc.T @ flat_enc_dpre[:, 2 * h_dim :]

        d_enc_x = flat_enc_dpre @ t["enc_wx"].T  # (B*T, I)
        v_size = t["emb"].shape[0]
        src_flat = cache.src_ids.reshape(-1)
        d_src_emb = d_enc_x[:, :e_dim]
        _scatter_rows(grads["emb"], src_flat, d_src_emb, v_size)
        if self.params.feature_mode == "WM":
            d_proj = d_enc_x[:, e_dim:]
            ac_flat = cache.acoustic.reshape(b * t_len, -1)
            grads["ac_w"] = ac_flat.T @ d_proj
            grads["ac_b"] = d_proj.sum(axis=0)

        # Embeddings fed to the decoder.
        _scatter_rows(
            grads["emb"],
            cache.prev_ids.reshape(-1),
            d_emb_rows.reshape(b * l_len, e_dim),
            v_size,
        )
        return grads

    # -- greedy decoding ------------------------------------------------------

    def greedy_decode_batch(self, src_ids: np.ndarray, acoustic: np.ndarray | None) -> list[list[int]]:
        """Argmax decoding until the end token or the length cap, per row."""
        t = self.params.tensors
        h_dim = self.hyper.hidden_size
        _, enc_h, _, _, _ = self.encode_batch(src_ids, acoustic)
        keys = enc_h[:, 1:]
        kw = keys @ t["att_wk"]
        b = keys.shape[0]
        uh = t["dec_uh"]
        uh_zr, uh_c = uh[:, : 2 * h_dim], uh[:, 2 * h_dim :]

        s = enc_h[:, -1]
        prev = np.full(b, SOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        out: list[list[int]] = [[] for _ in range(b)]
        for _ in range(self.hyper.max_decode_length):
            p = t["emb"][prev]
            _, _, ctx = self._attend(s, keys, kw)
            x = np.concatenate([p, ctx], axis=1)
            x_pre = x @ t["dec_wx"] + t["dec_b"]
            zr = _sigmoid(x_pre[:, : 2 * h_dim] + s @ uh_zr)
            z, r = zr[:, :h_dim], zr[:, h_dim:]
            c = np.tanh(x_pre[:, 2 * h_dim :] + (r * s) @ uh_c)
            s = (1.0 - z) * s + z * c
            logits = np.concatenate([p, ctx, s], axis=1) @ t["out_w"] + t["out_b"]
            nxt = np.argmax(logits, axis=1)
            for row in range(b):
                if not done[row]:
                    if nxt[row] == EOS_ID:
                        done[row] = True
                    else:
                        out[row].append(int(nxt[row]))
            if done.all():
                break
            prev = np.where(done, EOS_ID, nxt)
        return out


def _flip_array(ids: np.ndarray) -> np.ndarray:
    out = ids.copy()
    out[ids == TURN_A_ID] = TURN_B_ID
    out[ids == TURN_B_ID] = TURN_A_ID
    return out


def _scatter_rows(dest: np.ndarray, ids: np.ndarray, rows: np.ndarray, v_size: int):
    """dest[ids[k]] += rows[k], via a one-hot product for speed."""
    onehot = np.zeros((ids.size, v_size))
    onehot[np.arange(ids.size), ids] = 1.0
    dest += onehot.T @ rows


# ---------------------------------------------------------------------------
# Single-window convenience wrappers (the contract-level operations)
# ---------------------------------------------------------------------------


def encode(window: WindowSample, params: ModelParams, hyper: HyperParams):
    """Encoder states (32, H) and the final state for one window."""
    model = Seq2Seq(params, hyper)
    src = np.asarray(window.source_ids, dtype=np.int64)[None, :]
    ac = window.acoustic[None] if hyper.feature_mode == "WM" else None
    _, enc_h, _, _, _ = model.encode_batch(src, ac)
    return enc_h[0, 1:], enc_h[0, -1]


def decode_step(prev_token: int, state: np.ndarray, encoder_states: np.ndarray,
                params: ModelParams, hyper: HyperParams):
    """One attention-decoder step; returns (logits, new state, weights)."""
    t = params.tensors
    h_dim = hyper.hidden_size
    model = Seq2Seq(params, hyper)
    keys = encoder_states[None]
    kw = keys @ t["att_wk"]
    s = state[None]
    p = t["emb"][np.asarray([prev_token])]
    _, alpha, ctx = model._attend(s, keys, kw)
    x = np.concatenate([p, ctx], axis=1)
    x_pre = x @ t["dec_wx"] + t["dec_b"]
    uh = t["dec_uh"]
    zr = _sigmoid(x_pre[:, : 2 * h_dim] + s @ uh[:, : 2 * h_dim])
    z, r = zr[:, :h_dim], zr[:, h_dim:]
    c = np.tanh(x_pre[:, 2 * h_dim :] + (r * s) @ uh[:, 2 * h_dim :])
    s_new = (1.0 - z) * s + z * c
    logits = np.concatenate([p, ctx, s_new], axis=1) @ t["out_w"] + t["out_b"]
    return logits[0], s_new[0], alpha[0]


# ---------------------------------------------------------------------------
# Finite-difference verification of the analytic gradients
# ---------------------------------------------------------------------------


def spread_params(params: ModelParams, rng: np.random.Generator,
                  weight_scale: float = 8.0, bias_std: float = 0.1):
    """Move parameters away from the near-zero init, in place.

    Right after initialization the attention scores barely depend on
    the source position, so the query-path gradient cancels almost
    exactly (softmax Jacobian rows sum to zero) and finite differences
    see only rounding noise. Gradient checks therefore run at a spread
    point: scaled weights and small random biases.
    """
    for name, tensor in params.tensors.items():
        if name.endswith("_b"):
            tensor[:] = rng.normal(0.0, bias_std, size=tensor.shape)
        else:
            tensor *= weight_scale


def window_loss(model: Seq2Seq, window: WindowSample) -> tuple[float, dict[str, np.ndarray]]:
    """Teacher-forced flip-invariant loss and gradients for one window."""
    targets = np.asarray(window.target_ids + (EOS_ID,), dtype=np.int64)[None, :]
    prev_teacher = targets
    src = np.asarray(window.source_ids, dtype=np.int64)[None, :]
    ac = window.acoustic[None] if model.params.feature_mode == "WM" else None
    cache = model.forward_batch(src, ac, prev_teacher)
    lengths = np.asarray([targets.shape[1]], dtype=np.float64)
    loss, dlogits, _ = model.batch_loss(cache.logits, targets, lengths)
    grads = model.backward_batch(cache, dlogits)
    return loss, grads


def grad_check(params: ModelParams, hyper: HyperParams, window: WindowSample,
               h: float = 1e-5) -> tuple[float, dict[str, float]]:
    """Central finite differences against the analytic gradients.

    Per tensor the error is ||g_fd - g_an|| / max(||g_fd|| + ||g_an||, 1e-12);
    returns (max error, per-tensor errors). Intended for small models only.
    """
    model = Seq2Seq(params, hyper)
    _, analytic = window_loss(model, window)
    errs: dict[str, float] = {}
    for name, tensor in params.tensors.items():
        fd = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        fd_flat = fd.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp, _ = _loss_only(model, window)
            flat[k] = orig - h
            lm, _ = _loss_only(model, window)
            flat[k] = orig
            fd_flat[k] = (lp - lm) / (2.0 * h)
        an = analytic[name]
        denom = max(np.linalg.norm(fd) + np.linalg.norm(an), 1e-12)
        errs[name] = float(np.linalg.norm(fd - an) / denom)
    return max(errs.values()), errs


def _loss_only(model: Seq2Seq, window: WindowSample) -> tuple[float, None]:
    targets = np.asarray(window.target_ids + (EOS_ID,), dtype=np.int64)[None, :]
    src = np.asarray(window.source_ids, dtype=np.int64)[None, :]
    ac = window.acoustic[None] if model.params.feature_mode == "WM" else None
    cache = model.forward_batch(src, ac, targets)
    lengths = np.asarray([targets.shape[1]], dtype=np.float64)
    loss, _, _ = model.batch_loss(cache.logits, targets, lengths)
    return loss, None
