#!/usr/bin/env python3
"""Regenerates the bundled fixtures under data/.

Writes two fixture sets:
  data/demo    — a tiny two-model arithmetic demo (alpha/beta)
  data/corpus  — a two-model corpus (north/south) with >=4096-token
                 vocabularies and a 12-step scripted decode chain, used by
                 the efficiency and sweep tests

The script simulates the union-top-k decode (and the zero-fill baseline)
for every k the tests sweep, asserts the chosen-token margins are wide
enough that floating-point noise cannot flip them, and only then writes the
files. Deterministic: no RNG, fixed content.

Usage: python3 scripts/make_fixtures.py
"""

import json
import math
import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

ASCII_SINGLES = ["\t", "\n"] + [chr(b) for b in range(0x20, 0x7F)]

MARGIN = 1e-3  # minimum winner-vs-runner-up gap in averaged probability


def byte_key(token):
    return token.encode("utf-8")


# ----------------------------------------------------------------------------
# Reference implementation of the scripted backend + union-top-k step
# ----------------------------------------------------------------------------

class Model:
    def __init__(self, model_id, extra_tokens, contexts, eos):
        self.model_id = model_id
        self.vocab = list(dict.fromkeys(ASCII_SINGLES + extra_tokens))
        self.vocab_set = set(self.vocab)
        self.contexts = contexts  # context text -> {token: prob}
        self.eos = eos
        self.sorted_tokens = sorted(self.vocab, key=byte_key)
        self.max_len = max(len(t) for t in self.vocab)

    def table(self, ctx):
        if ctx not in self.contexts:
            raise KeyError(f"{self.model_id}: no scripted table for {ctx!r}")
        return self.contexts[ctx]

    def topk(self, ctx, k):
        table = self.table(ctx)
        entries = sorted(table.items(), key=lambda kv: (-kv[1], byte_key(kv[0])))
        want = min(k, len(self.vocab))
        if len(entries) < want:
            present = set(table)
            for token in self.sorted_tokens:
                if len(entries) >= want:
                    break
                if token not in present:
                    entries.append((token, 0.0))
        return entries[:want]

    def prob_of(self, ctx, token):
        assert token in self.vocab_set, (self.model_id, token)
        return self.table(ctx).get(token, 0.0)

    def tokenize(self, text):
        out, pos = [], 0
        while pos < len(text):
            take = min(self.max_len, len(text) - pos)
            while take > 0 and text[pos:pos + take] not in self.vocab_set:
                take -= 1
            assert take > 0, f"{self.model_id} cannot tokenize {text!r}"
            out.append(text[pos:pos + take])
            pos += take
        return out


def unite_step(models, ctx, k):
    dists = [dict(m.topk(ctx, k)) for m in models]
    max_prob = {}
    for dist in dists:
        for token, prob in dist.items():
            max_prob[token] = max(max_prob.get(token, -1.0), prob)
    union = sorted(max_prob, key=lambda t: (-max_prob[t], byte_key(t)))

    rows = []
    for model, dist in zip(models, dists):
        row = []
        for w in union:
            if w in dist:
                p = dist[w]
            elif w in model.vocab_set:
                p = model.prob_of(ctx, w)
            else:
                first = model.tokenize(w)[0]
                p = dist[first] if first in dist else model.prob_of(ctx, first)
            row.append(p)
        exps = [math.exp(v) for v in row]
        total = sum(exps)
        rows.append([v / total for v in exps])

    avg = [sum(row[j] for row in rows) / len(rows) for j in range(len(union))]
    order = sorted(range(len(union)), key=lambda j: (-avg[j], byte_key(union[j])))
    margin = avg[order[0]] - (avg[order[1]] if len(order) > 1 else 0.0)
    return union[order[0]], margin, len(union)


def zero_fill_step(models, ctx):
    union = sorted(set().union(*(m.vocab_set for m in models)), key=byte_key)
    best, best_avg = None, -1.0
    second = -1.0
    for token in union:
        total = 0.0
        for model in models:
            if token in model.vocab_set:
                total += model.prob_of(ctx, token)
        avg = total / len(models)
        if avg > best_avg:
            best, second, best_avg = token, best_avg, avg
        elif avg > second:
            second = avg
    return best, best_avg - second, len(union)


def simulate(models, prompt, primary, k_values, max_steps=64):
    """Returns the chosen-token chain, asserting it is identical for every k
    and that every choice clears MARGIN in both unite and zero-fill space."""
    chains = {}
    for k in k_values:
        ctx, chain = prompt, []
        for _ in range(max_steps):
            token, margin, union_size = unite_step(models, ctx, k)
            assert margin >= MARGIN, (
                f"k={k}: margin {margin:.6f} too small at {ctx!r} -> {token!r}")
            chain.append(token)
            ctx += token
            if token == primary.eos:
                break
        else:
            raise AssertionError(f"k={k}: no eos within {max_steps} steps")
        chains[k] = chain
    baseline = chains[k_values[0]]
    for k, chain in chains.items():
        assert chain == baseline, f"k={k} diverges: {chain} vs {baseline}"

    # The zero-fill baseline must follow the same context chain, so the same
    # scripted tables cover it.
    ctx = prompt
    for expected in baseline:
        token, margin, _ = zero_fill_step(models, ctx)
        assert token == expected, (
            f"zero-fill diverges at {ctx!r}: {token!r} != {expected!r}")
        assert margin >= MARGIN / 10, f"zero-fill margin too small at {ctx!r}"
        ctx += token
    return baseline


# ----------------------------------------------------------------------------
# Fixture writing
# ----------------------------------------------------------------------------

def write_vocab(path, tokens):
    with open(path, "w", encoding="utf-8") as f:
        for token in tokens:
            f.write(json.dumps(token, ensure_ascii=True) + "\n")


def write_script(path, model):
    doc = {"model_id": model.model_id, "contexts": model.contexts}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, ensure_ascii=True, sort_keys=True)
        f.write("\n")


def write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, ensure_ascii=True, sort_keys=True)
        f.write("\n")


def emit(models, directory, manifest_rows):
    os.makedirs(directory, exist_ok=True)
    for model in models:
        write_vocab(os.path.join(directory, f"{model.model_id}_vocab.txt"),
                    model.vocab)
        write_script(os.path.join(directory, f"{model.model_id}_script.json"),
                     model)
    write_json(os.path.join(directory, "manifest.json"), manifest_rows)


# ----------------------------------------------------------------------------
# data/demo — alpha/beta answering "2+2="
# ----------------------------------------------------------------------------

def build_demo():
    prompt = "2+2="
    alpha = Model(
        "alpha", ["</s>"],
        {
            prompt: {"4": 0.50, "3": 0.20, "5": 0.10},
            prompt + "4": {"</s>": 0.90, "!": 0.05},
        },
        eos="</s>")
    beta = Model(
        "beta", ["<eos_b>"],
        {
            prompt: {"4": 0.45, "3": 0.25, "7": 0.05},
            prompt + "4": {"<eos_b>": 0.80, "!": 0.10},
        },
        eos="<eos_b>")

    chain = simulate([alpha, beta], prompt, primary=alpha,
                     k_values=[1, 2, 5, 10])
    assert chain == ["4", "</s>"], chain

    directory = os.path.join(ROOT, "data", "demo")
    emit([alpha, beta], directory, [
        {
            "model_id": "alpha",
            "scores": {"demo": 80.0},
            "mean_response_length": 100.0,
            "vocab_file": "alpha_vocab.txt",
            "script_file": "alpha_script.json",
            "eos_token": "</s>",
        },
        {
            "model_id": "beta",
            "scores": {"demo": 79.0},
            "mean_response_length": 120.0,
            "vocab_file": "beta_vocab.txt",
            "script_file": "beta_script.json",
            "eos_token": "<eos_b>",
        },
    ])
    with open(os.path.join(directory, "config.ini"), "w", encoding="utf-8") as f:
        f.write("# demo run configuration\n"
                "manifest = manifest.json\n"
                "task = demo\n"
                "method = unite\n"
                "prompt = 2+2=\n"
                "\n"
                "[ensemble]\n"
                "k = 10\n"
                "max_new_tokens = 8\n")
    print(f"demo: chain {chain}, vocabs {len(alpha.vocab)}/{len(beta.vocab)}")


# ----------------------------------------------------------------------------
# data/corpus — north/south over a >=4096-token vocabulary, 12-step chain
# ----------------------------------------------------------------------------

def build_corpus():
    prompt = "corpus:"
    shared = [f"k{i:04x}" for i in range(4096)]
    north_only = [f"na{i:02x}" for i in range(64)]
    south_only = [f"sa{i:02x}" for i in range(64)]

    steps = 12
    chain = [f"k{t:04x}" for t in range(1, steps + 1)]

    north_ctx, south_ctx = {}, {}
    ctx = prompt
    for t, w in enumerate(chain, start=1):
        # Dominant shared token, then shared fillers (partially overlapping
        # between the models), model-unique fillers, and a whisper of eos.
        north_table = {w: 0.30}
        south_table = {w: 0.28}
        base = 0x200 + t * 0x20
        for i in range(10):
            north_table[f"k{base + i:04x}"] = 0.020 - 0.001 * i
        for i in range(8):  # overlaps north's fillers 2..9
            south_table[f"k{base + 2 + i:04x}"] = 0.019 - 0.001 * i
        for i in range(5):
            north_table[f"na{(t * 5 + i) % 64:02x}"] = 0.015 - 0.002 * i
            south_table[f"sa{(t * 5 + i) % 64:02x}"] = 0.014 - 0.002 * i
        north_table["<eos_n>"] = 0.001
        south_table["<eos_s>"] = 0.001
        north_ctx[ctx] = north_table
        south_ctx[ctx] = south_table
        ctx += w

    # Terminal step: north (the primary) proposes its eos with a wide margin.
    north_ctx[ctx] = {"<eos_n>": 0.95, chain[0]: 0.01}
    south_ctx[ctx] = {chain[0]: 0.30, chain[1]: 0.10, "<eos_s>": 0.05}

    north = Model("north", shared + north_only + ["<eos_n>"], north_ctx,
                  eos="<eos_n>")
    south = Model("south", shared + south_only + ["<eos_s>"], south_ctx,
                  eos="<eos_s>")

    decoded = simulate([north, south], prompt, primary=north,
                       k_values=[1, 5, 10, 15, 20])
    assert decoded == chain + ["<eos_n>"], decoded

    union_sizes = []
    ctx = prompt
    for token in decoded:
        _, _, union_size = unite_step([north, south], ctx, 10)
        union_sizes.append(union_size)
        ctx += token
    mean_union = sum(union_sizes) / len(union_sizes)
    full_union = len(set(north.vocab) | set(south.vocab))
    assert 2 * mean_union <= 40, f"k=10 mean cells {2 * mean_union} > 40"
    assert full_union >= 4096, full_union
    assert 2 * mean_union < 0.01 * (2 * full_union), (
        f"unite cells {2 * mean_union} not < 1% of zero-fill {2 * full_union}")

    directory = os.path.join(ROOT, "data", "corpus")
    emit([north, south], directory, [
        {
            "model_id": "north",
            "scores": {"corpus": 81.5},
            "mean_response_length": 120.0,
            "vocab_file": "north_vocab.txt",
            "script_file": "north_script.json",
            "eos_token": "<eos_n>",
        },
        {
            "model_id": "south",
            "scores": {"corpus": 80.0},
            "mean_response_length": 100.0,
            "vocab_file": "south_vocab.txt",
            "script_file": "south_script.json",
            "eos_token": "<eos_s>",
        },
    ])
    print(f"corpus: {len(decoded)} steps, mean union {mean_union:.2f} at k=10, "
          f"full union {full_union}")


def main():
    build_demo()
    build_corpus()
    print("fixtures written to data/")


if __name__ == "__main__":
    sys.exit(main())
