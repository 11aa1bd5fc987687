"""Shared fixtures: a tiny randomly initialized encoder + WordPiece
tokenizer saved to disk, and a small hand-labeled task corpus whose words
are all in the tokenizer vocabulary. Everything is seeded; nothing is
downloaded."""

import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

WORDS = ["no", "mass", "in", "the", "liver", ".", "stable", "nodule",
         "lung", "large", "spleen", "exam", "is", "normal", "two", "small",
         "nodules", "seen"]

MARKERS = ("[unused0]", "[unused1]", "[unused2]", "[unused3]")


def build_tiny_base(path, seed=0):
    """Write a from-scratch BERT-shaped encoder (2 layers, hidden 32) and a
    WordPiece tokenizer with reserved marker entries to `path`."""
    vocab_list = (["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
                   *MARKERS, "ab", "##cd", "##ef"] + WORDS
                  + list("abcdefghijklmnopqrstuvwxyz0123456789")
                  + ["##" + c for c in "abcdefghijklmnopqrstuvwxyz0123456789"])
    vocab = {tok: i for i, tok in enumerate(vocab_list)}
    tk = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]",
                                    max_input_chars_per_word=64))
    tk.normalizer = normalizers.BertNormalizer(lowercase=True)
    tk.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tk.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]", pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])])
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tk, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]")
    torch.manual_seed(seed)
    config = BertConfig(vocab_size=len(tokenizer), hidden_size=32,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=64, max_position_embeddings=64)
    BertModel(config).save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


# five sentences; every word carries the same label wherever it appears
NER5 = [
    (["no", "mass", "in", "the", "liver", "."],
     ["O", "B-Lesion-Description", "O", "O", "B-Lesion-Anatomy", "O"]),
    (["stable", "nodule", "in", "the", "lung", "."],
     ["O", "B-Lesion-Description", "O", "O", "B-Lesion-Anatomy", "O"]),
    (["large", "mass", "in", "the", "spleen", "."],
     ["B-Lesion-Characteristic", "B-Lesion-Description", "O", "O",
      "B-Lesion-Anatomy", "O"]),
    (["the", "exam", "is", "normal", "."],
     ["O", "O", "O", "O", "O"]),
    (["two", "small", "nodules", "seen", "."],
     ["B-Lesion-Count", "B-Lesion-Characteristic", "B-Lesion-Description",
      "O", "O"]),
]


def make_candidate(marked, gold):
    return {"sentence_index": 0, "event_type": "Lesion", "trigger_index": 0,
            "arg_index": 1, "trigger_tokens": [1], "arg_tokens": [4],
            "arg_label": "Lesion-Anatomy", "arg_value": None,
            "marked_tokens": list(marked),
            "allowed_roles": ["Lesion-Anatomy", "No_relation"],
            "gold_role": gold}


RE3 = [
    make_candidate(["[unused0]", "mass", "[unused1]", "in", "the",
                    "[unused2]", "liver", "[unused3]", "."],
                   "Lesion-Anatomy"),
    make_candidate(["[unused0]", "nodule", "[unused1]", "in", "the",
                    "[unused2]", "lung", "[unused3]", "."],
                   "Lesion-Anatomy"),
    make_candidate(["[unused0]", "mass", "[unused1]", "[unused2]", "stable",
                    "[unused3]", "."],
                   "No_relation"),
]


@pytest.fixture(scope="session")
def base_model(tmp_path_factory):
    return str(build_tiny_base(tmp_path_factory.mktemp("base") / "tiny"))


@pytest.fixture(scope="session")
def trained_dir(tmp_path_factory, base_model):
    """A fully overfit adapter saved to disk, for the serving tests."""
    from reference_adapter import AdapterConfig, fine_tune

    out = tmp_path_factory.mktemp("trained") / "adapter"
    config = AdapterConfig(base_model=base_model, learning_rate=5e-3,
                           dropout=0.0)
    fine_tune(config, NER5, RE3, epochs=400, batch_size=8, seed=7,
              max_steps=200, out_dir=out)
    return str(out)
