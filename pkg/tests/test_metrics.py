import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from katena.toolkit.metrics import SEPARATORS, count_file, count_tokens, language_for, tokenize

from conftest import FIXTURES

NOT_DIR = FIXTURES / "not"
MANUAL = json.loads((NOT_DIR / "manual_counts.json").read_text())


def test_method_call_is_two_tokens():
    assert tokenize("contract.deploy()", "js") == ["contract", "deploy"]
    assert count_tokens("contract.deploy()", "js").tokens == 2


@pytest.mark.parametrize("language", ["yaml", "js"])
def test_empty_input_counts_zero(language):
    assert count_tokens("", language).tokens == 0
    assert count_tokens("\n  \n\t\n", language).tokens == 0


def test_comment_only_inputs_count_zero():
    assert count_tokens("# a: b\n   # c d e\n", "yaml").tokens == 0
    assert count_tokens("// a b\n/* c\n d */\nconsole.log(x)\n", "js").tokens == 0


def test_js_comment_handling():
    src = "const a = 1; /* hidden */ const b = 2;\n  // gone\n  console.log(a)\nlet c = a /* x\ny */ + b\n"
    assert tokenize(src, "js") == ["const", "a", "1", "const", "b", "2", "let", "c", "a", "+", "b"]


def test_trailing_comments_are_counted():
    assert tokenize("a: b # note", "yaml") == ["a", "b", "#", "note"]


def test_unknown_language_is_rejected():
    with pytest.raises(ValueError, match="unknown language"):
        tokenize("x", "python")


def test_language_inference(tmp_path):
    assert language_for("a.yml") == "yaml"
    assert language_for("deploy.JS") == "js"
    with pytest.raises(ValueError):
        language_for("a.txt")
    path = tmp_path / "s.js"
    path.write_text("await contract.deploy();\n")
    result = count_file(path)
    assert result.to_dict() == {"file": str(path), "tokens": 3, "language": "js"}


@pytest.mark.parametrize("name", sorted(k for k in MANUAL if not k.startswith("_")))
def test_snippets_match_manual_tokenization(name):
    expected = MANUAL[name]
    text = (NOT_DIR / name).read_text()
    assert tokenize(text, expected["language"]) == expected["tokens"]
    assert count_file(NOT_DIR / name).tokens == expected["count"]


LINE = st.text(alphabet=st.sampled_from(list("ab0_-+#/*" + SEPARATORS.replace("\n", "").replace("\r", ""))), max_size=30)
CODE_LINE = LINE.filter(lambda s: not s.lstrip().startswith(("#", "//", "console.")) and "/*" not in s and "*/" not in s)


@given(st.lists(CODE_LINE, max_size=8), st.lists(CODE_LINE, max_size=8), st.sampled_from(["yaml", "js"]))
@settings(max_examples=300, deadline=None)
def test_concatenation_is_additive(a, b, language):
    text_a, text_b = "\n".join(a), "\n".join(b)
    joined = count_tokens(text_a + "\n" + text_b, language).tokens
    assert joined == count_tokens(text_a, language).tokens + count_tokens(text_b, language).tokens
