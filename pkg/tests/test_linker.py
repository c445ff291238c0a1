import random

import eth_abi
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from katena.errors import AbiError, LinkError
from katena.hashing import check_address, keccak256, selector, to_checksum_address
from katena.linker import abi
from katena.linker.binding import bind_constructor, constructor_binding, encode_constructor_call, encode_function_call
from katena.linker.placeholders import (
    extract_placeholders,
    legacy_placeholder_name,
    link_all,
    link_library,
    matches_library,
    placeholder_digest,
)

# -- hashing -------------------------------------------------------------------


@given(st.binary(max_size=400))
@settings(max_examples=150, deadline=None)
def test_keccak_matches_pure_python_oracle(data):
    assert keccak256(data) == oracles.keccak256(data)


def test_transfer_selector_against_oracle():
    expected = oracles.selector("transfer(address,uint256)")
    assert expected == "0xa9059cbb"
    assert "0x" + selector("transfer(address,uint256)").hex() == expected


@pytest.mark.parametrize(
    "address",
    [
        "0x5aAeb6053F3E94C9b9A09f33669435E7Ef1BeAed",
        "0xfB6916095ca1df60bB79Ce92cE3Ea74c37c5d359",
        "0xdbF03B407c01E7cD3CBea99509d93f8DDDC8C6FB",
        "0xD1220A0cf47c7B9Be7A2E6BA89F429762e7b9aDb",
    ],
)
def test_eip55_checksum_vectors(address):
    assert to_checksum_address(address.lower()) == address
    assert check_address(address.lower()) == address


def test_check_address_rejects_bad_checksum_and_length():
    with pytest.raises(ValueError):
        check_address("0x5aaeb6053F3E94C9b9A09f33669435E7Ef1BeAed")
    with pytest.raises(ValueError):
        check_address("0x1234")


# -- ABI codec -----------------------------------------------------------------

ADDRESS = st.binary(min_size=20, max_size=20).map(lambda b: to_checksum_address("0x" + b.hex()))
SCALARS = {
    "uint256": st.integers(0, 2**256 - 1),
    "uint8": st.integers(0, 255),
    "int256": st.integers(-(2**255), 2**255 - 1),
    "int24": st.integers(-(2**23), 2**23 - 1),
    "address": ADDRESS,
    "bool": st.booleans(),
    "bytes32": st.binary(min_size=32, max_size=32),
    "bytes4": st.binary(min_size=4, max_size=4),
    "bytes": st.binary(max_size=80),
    "string": st.text(max_size=40),
}


@st.composite
def typed_values(draw, depth=0):
    choice = draw(st.sampled_from(list(SCALARS) + (["array", "fixed", "tuple"] if depth < 2 else [])))
    if choice == "array":
        t, _ = draw(typed_values(depth + 1))
        items = draw(st.lists(typed_values_of(t), max_size=4))
        return f"{t}[]", items
    if choice == "fixed":
        t, _ = draw(typed_values(depth + 1))
        k = draw(st.integers(1, 3))
        items = [draw(typed_values_of(t)) for _ in range(k)]
        return f"{t}[{k}]", items
    if choice == "tuple":
        parts = draw(st.lists(typed_values(depth + 1), min_size=1, max_size=3))
        return "(" + ",".join(t for t, _ in parts) + ")", tuple(v for _, v in parts)
    return choice, draw(SCALARS[choice])


def typed_values_of(t):
    @st.composite
    def strat(draw):
        return draw(_value_for(abi.parse_type(t)))

    return strat()


def _value_for(t):
    if t.kind == "tuple":
        return st.tuples(*[_value_for(c) for c in t.components])
    if t.kind == "array":
        inner = _value_for(t.item)
        if t.length is None:
            return st.lists(inner, max_size=4)
        return st.lists(inner, min_size=t.length, max_size=t.length)
    return SCALARS[str(t)] if str(t) in SCALARS else SCALARS[t.kind + (str(t.size) if t.size else "")]


def _normalise(t, value):
    """eth_abi's decoded shape: tuples for arrays/tuples, lowercase addresses."""
    t = abi.parse_type(t) if isinstance(t, str) else t
    if t.kind == "tuple":
        return tuple(_normalise(c, v) for c, v in zip(t.components, value))
    if t.kind == "array":
        return tuple(_normalise(t.item, v) for v in value)
    if t.kind == "address":
        return value.lower()
    return value


@given(st.lists(typed_values(), min_size=1, max_size=4))
@settings(max_examples=300, deadline=None)
def test_encoder_matches_eth_abi_and_round_trips(pairs):
    types = [t for t, _ in pairs]
    values = [v for _, v in pairs]
    ours = abi.encode(types, values)
    assert ours == eth_abi.encode(types, values)
    decoded = abi.decode(types, ours)
    assert [_normalise(t, v) for t, v in zip(types, decoded)] == [_normalise(t, v) for t, v in zip(types, values)]


def test_encode_with_selector_prefixes_selector():
    data = abi.encode_with_selector("transfer(address,uint256)", ["0x" + "00" * 19 + "01", 5])
    assert data[:4].hex() == "a9059cbb"
    assert data[4:] == eth_abi.encode(["address", "uint256"], ["0x" + "00" * 19 + "01", 5])


@pytest.mark.parametrize(
    "t,value",
    [
        ("uint256", 0.1),
        ("uint256", -1),
        ("uint8", 256),
        ("int8", 128),
        ("bool", 2),
        ("address", "0x1234"),
        ("bytes4", b"\x00" * 5),
        ("string", 3),
    ],
)
def test_coerce_rejects_out_of_range_or_wrong_kind(t, value):
    with pytest.raises(AbiError):
        abi.coerce(t, value)


def test_coerce_accepts_integral_float_and_numeric_string():
    assert abi.coerce("uint256", 100.0) == 100
    assert abi.coerce("uint256", "100000000000000000") == 10**17


def test_parse_signature_and_canonical_form():
    name, types = abi.parse_signature("diamondCut((address,uint8,bytes4[])[],address,bytes)")
    assert name == "diamondCut"
    assert [str(t) for t in types] == ["(address,uint8,bytes4[])[]", "address", "bytes"]
    assert abi.canonical_signature("f", ["uint", "int"]) == "f(uint256,int256)"


def test_decode_rejects_truncated_data():
    with pytest.raises(AbiError):
        abi.decode(["uint256", "uint256"], b"\x00" * 40)


# -- placeholders --------------------------------------------------------------

FQ = "contracts/MathImpl.sol:MathImpl"


def _modern(fq):
    return f"__${placeholder_digest(fq)}$__"


def test_placeholder_digest_is_keccak_prefix_of_fq_name():
    assert placeholder_digest(FQ) == oracles.keccak256(FQ.encode()).hex()[:34]
    assert len(_modern(FQ)) == 40


def test_legacy_placeholder_shape():
    text = legacy_placeholder_name(FQ)
    assert len(text) == 40 and text.startswith("__") and text.endswith("__")


def _random_bytecode(rng, libs):
    parts = []
    for _ in range(rng.randint(1, 6)):
        parts.append(rng.randbytes(rng.randint(0, 40)).hex())
        if rng.random() < 0.7:
            fq = rng.choice(libs)
            parts.append(_modern(fq) if rng.random() < 0.7 else legacy_placeholder_name(fq))
    return "".join(parts)


def test_link_round_trip_on_100_random_bytecodes():
    rng = random.Random(1234)
    libs = [f"contracts/L{i}.sol:L{i}" for i in range(4)]
    for _ in range(100):
        code = _random_bytecode(rng, libs)
        prefixed = rng.random() < 0.5
        if prefixed:
            code = "0x" + code
        found = extract_placeholders(code)
        addresses = {fq: to_checksum_address("0x" + rng.randbytes(20).hex()) for fq in libs}
        linked = link_all(code, addresses)
        assert extract_placeholders(linked) == []
        assert len(linked) == len(code)
        assert linked.startswith("0x") == prefixed
        for ph in found:
            fq = next(f for f in libs if matches_library(ph, f))
            body = linked[2:] if prefixed else linked
            assert body[ph.start:ph.end] == addresses[fq][2:].lower()


def test_extract_reports_offsets_and_names():
    code = "6080" + _modern(FQ) + "00"
    (ph,) = extract_placeholders(code, {placeholder_digest(FQ): FQ})
    assert (ph.start, ph.end, ph.modern, ph.resolved_name) == (4, 44, True, FQ)


@pytest.mark.parametrize(
    "code",
    [
        "60" + _modern(FQ)[:30],  # truncated placeholder
        "6g" + "00",  # non-hex
        "6" + _modern(FQ) + "0",  # misaligned
        "600",  # odd length
    ],
)
def test_extract_rejects_malformed_bytecode(code):
    with pytest.raises(LinkError):
        extract_placeholders(code)


def test_link_library_rejects_missing_placeholder_and_bad_address():
    code = "00" + _modern(FQ)
    with pytest.raises(LinkError):
        link_library("0000", _modern(FQ), "0x" + "11" * 20)
    with pytest.raises(LinkError):
        link_library(code, _modern(FQ), "0x12")


def test_encode_constructor_refuses_unlinked_bytecode():
    with pytest.raises(LinkError):
        encode_constructor_call("00" + _modern(FQ), [], [])


# -- constructor binding -------------------------------------------------------


def test_refs_take_earliest_address_slots_params_fill_the_rest():
    sig = [abi.parse_type(t) for t in ("uint256", "address", "address", "uint256")]
    b = constructor_binding(sig, 1, 3)
    assert b.ref_slots == (1,) and b.user_slots == (0, 2, 3)


def test_binding_arity_and_slot_errors():
    sig = [abi.parse_type("uint256")]
    with pytest.raises(AbiError, match="takes 1 argument"):
        constructor_binding(sig, 0, 2)
    with pytest.raises(AbiError, match="slot 0 is uint256"):
        constructor_binding(sig, 1, 0)


def test_bind_constructor_voting_fixture(store):
    voting = store.get("Voting")
    rg = "0x" + "ab" * 20
    args = bind_constructor(voting, [rg], [100, 100000000000000000])
    assert args == [check_address(rg), 100, 10**17]
    with pytest.raises(AbiError, match="pre-scale"):
        bind_constructor(voting, [rg], [100, 0.1])


def test_encode_function_call_matches_eth_abi(store):
    tickets = store.get("Tickets")
    data = encode_function_call(tickets, "setAdmin", ["0x" + "22" * 20], ["address"])
    assert data[:4].hex() == oracles.selector("setAdmin(address)")[2:]
    assert data[4:] == eth_abi.encode(["address"], ["0x" + "22" * 20])
