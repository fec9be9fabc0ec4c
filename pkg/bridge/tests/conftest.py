import pytest
import torch
from tokenizers import Tokenizer, normalizers, pre_tokenizers, processors
from tokenizers.models import WordPiece
from transformers import BertConfig, BertModel, BertTokenizerFast

WORDS = [
    "the", "of", "in", "on", "rule", "chemistry", "organic", "bond",
    "electron", "model", "query", "passage", "rank", "score", "vector",
    "index", "search", "token", "group", "main", "octet", "insight",
]


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """Tiny random-weight BERT checkpoint saved through the transformers API.

    Stands in for a small public checkpoint: the export code path
    (AutoModel/AutoTokenizer.from_pretrained) is identical.
    """
    root = tmp_path_factory.mktemp("ckpt")
    tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    tokens += [chr(c) for c in range(ord("a"), ord("z") + 1)]
    tokens += ["##" + chr(c) for c in range(ord("a"), ord("z") + 1)]
    tokens += WORDS + ["##" + w for w in WORDS]
    tokens += [f"w{i}" for i in range(100)]
    vocab = {tok: i for i, tok in enumerate(dict.fromkeys(tokens))}

    wordpiece = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    wordpiece.normalizer = normalizers.BertNormalizer(lowercase=True)
    wordpiece.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    wordpiece.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = BertTokenizerFast(
        tokenizer_object=wordpiece,
        unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]",
    )

    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=256,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    out = root / "model"
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return out
