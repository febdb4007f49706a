#!/usr/bin/env python3
"""Smoke test for the veriml_py extension module.

Build and stage the module first:

    cargo build -p veriml-py --release
    cp target/release/libveriml_py.so python/veriml_py.so

then run `python3 python/smoke_test.py`.
"""

import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import veriml_py as vm


def test_fixed_point():
    x = vm.FixedPoint.encode(0.197, 16)
    assert x.raw == "12911", x.raw
    assert abs(x.to_float() - 0.197) < 2**-16

    a = vm.FixedPoint.encode(1.5, 4)
    b = vm.FixedPoint.encode(2.0, 4)
    prod = a.mul(b)
    assert prod.raw == "768" and prod.frac_bits == 8
    assert prod.truncate(4).to_float() == 3.0
    print("fixed point: ok")


def test_sampling_math():
    assert vm.detection_probability(100_000, 0.7, 10) > 0.95
    assert vm.detection_probability(100_000, 0.7, 14) > 0.99
    assert vm.detection_probability(1000, 1.0, 10) == 0.0
    c = vm.required_challenges(100_000, 0.5, 0.95)
    assert c == 5, c
    assert vm.relaxed_soundness_bound(0.5, 1) == 1.0
    assert vm.storage_cost(32, 13, 10_000, 50) == 83_200
    print("sampling math: ok")


def test_ledger():
    ledger = vm.Ledger(100, 0)
    total = ledger.total_value()
    key = b"shared-secret-key"
    tx = ledger.post_escrow("client", "server", key, 40, 10)
    assert ledger.balance("client") == 60
    assert ledger.total_value() == total
    assert not ledger.redeem(tx, b"wrong-preimage")
    assert ledger.redeem(tx, key)
    assert ledger.balance("server") == 40
    assert ledger.total_value() == total
    print("ledger: ok")


def test_delivery_cipher():
    data = b"model bytes, several blocks worth of payload..." * 3
    key = b"k" * 32
    ct = vm.encrypt_delivery(key, data)
    assert bytes(ct) != data
    assert bytes(vm.encrypt_delivery(key, bytes(ct))) == data
    print("delivery cipher: ok")


def test_protocol_roundtrip():
    honest = vm.run_demo(algorithm="linreg", n=24, d=3, challenges=2, seed=11)
    assert honest["accepted"], honest
    assert honest["iterations"] >= 2

    # forging most of the commitment should be caught with a couple of draws
    caught = 0
    for seed in range(12, 18):
        forged = vm.run_demo(
            algorithm="linreg", n=24, d=3, challenges=3, forge_fraction=0.8, seed=seed
        )
        if not forged["accepted"]:
            caught += 1
            assert "CommitmentMismatch" in forged["reject_reason"]
    assert caught >= 5, f"only {caught}/6 forged runs detected"
    print("protocol round trip: ok")


if __name__ == "__main__":
    test_fixed_point()
    test_sampling_math()
    test_ledger()
    test_delivery_cipher()
    test_protocol_roundtrip()
    print("smoke test passed")
