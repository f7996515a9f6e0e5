#include <gtest/gtest.h>

#include <string>

#include "joytts/rng.hpp"
#include "joytts/text_tokenizer.hpp"

using namespace joytts;

TEST(Encode, AsciiByteIdentity) {
  EXPECT_EQ(encode_text("ab"), (TextTokenSeq{97, 98}));
}

TEST(Encode, EmptyString) {
  EXPECT_TRUE(encode_text("").empty());
}

TEST(Encode, Utf8BytesMatchEncoderOracle) {
  std::string s = "h\xc3\xa9llo";  // "héllo", é = C3 A9
  TextTokenSeq ids = encode_text(s);
  ASSERT_EQ(ids.size(), 6u);
  for (size_t i = 0; i < s.size(); ++i)
    EXPECT_EQ(ids[i], static_cast<int>(static_cast<unsigned char>(s[i])));
}

TEST(Decode, SimpleBytes) {
  EXPECT_EQ(decode_text({97, 98}), "ab");
}

TEST(Decode, SpecialsStripped) {
  EXPECT_EQ(decode_text({text_vocab::kBos, 97, text_vocab::kEos}), "a");
}

TEST(Decode, InvalidBytesBecomeReplacementChar) {
  EXPECT_EQ(decode_text({0xff}), "\xef\xbf\xbd");
  EXPECT_EQ(decode_text({0xc3}), "\xef\xbf\xbd");  // truncated sequence
}

TEST(Decode, RoundTripRandomAscii) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    int len = static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < len; ++i)
      s.push_back(static_cast<char>(32 + rng.uniform_int(95)));
    EXPECT_EQ(decode_text(encode_text(s)), s);
  }
}

TEST(Decode, RoundTripRandomUtf8) {
  Rng rng(78);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string s;
    int len = static_cast<int>(rng.uniform_int(20));
    for (int i = 0; i < len; ++i) {
      uint32_t cp;
      do {
        cp = static_cast<uint32_t>(rng.uniform_int(0x10FFFF + 1));
      } while (cp >= 0xD800 && cp <= 0xDFFF);
      if (cp < 0x80) {
        s.push_back(static_cast<char>(cp));
      } else if (cp < 0x800) {
        s.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
      } else if (cp < 0x10000) {
        s.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
      } else {
        s.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        s.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
      }
    }
    EXPECT_EQ(decode_text(encode_text(s)), s);
  }
}

TEST(ChatTemplate, EmptyHistory) {
  TextTokenSeq t = chat_template({}, "hi");
  EXPECT_EQ(t, (TextTokenSeq{text_vocab::kBos, text_vocab::kTurnUser, 104, 105,
                             text_vocab::kTurnAssistant}));
}

TEST(ChatTemplate, MarkerOrderWithHistory) {
  TextTokenSeq t = chat_template({{"user", "a"}, {"assistant", "b"}}, "c");
  std::vector<int> markers;
  for (int id : t)
    if (id >= 256) markers.push_back(id);
  EXPECT_EQ(markers, (std::vector<int>{text_vocab::kBos, text_vocab::kTurnUser,
                                       text_vocab::kTurnAssistant, text_vocab::kTurnUser,
                                       text_vocab::kTurnAssistant}));
}

TEST(ChatTemplate, LengthCountingOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ChatTurn> history;
    int exchanges = static_cast<int>(rng.uniform_int(3));
    size_t byte_total = 0;
    for (int e = 0; e < exchanges; ++e) {
      std::string u(1 + rng.uniform_int(6), 'u');
      std::string a(1 + rng.uniform_int(6), 'a');
      history.push_back({"user", u});
      history.push_back({"assistant", a});
      byte_total += u.size() + a.size();
    }
    std::string msg(rng.uniform_int(8), 'm');
    byte_total += msg.size();
    size_t turns = history.size() + 1;
    TextTokenSeq t = chat_template(history, msg);
    EXPECT_EQ(t.size(), 2 + turns + byte_total);
    EXPECT_EQ(t.back(), text_vocab::kTurnAssistant);
  }
}

TEST(ChatTemplate, NonAlternatingRolesThrow) {
  EXPECT_THROW(chat_template({{"assistant", "a"}, {"user", "b"}}, "c"), ContractError);
  EXPECT_THROW(chat_template({{"user", "a"}, {"user", "b"}}, "c"), ContractError);
  EXPECT_THROW(chat_template({{"user", "a"}}, "c"), ContractError);
}

TEST(RepeatWrap, UserSpanDecodesToWrapperPlusPrompt) {
  std::string prompt = "\xe4\xbd\xa0\xe5\xa5\xbd";  // "你好"
  TextTokenSeq t = repeat_prompt_wrap(prompt);
  // User span sits between TURN_USER and the trailing TURN_ASSISTANT.
  TextTokenSeq span(t.begin() + 2, t.end() - 1);
  EXPECT_EQ(decode_text(span), std::string(kDefaultRepeatWrapper) + prompt);
}

TEST(RepeatWrap, EmptyPromptIsBareWrapper) {
  TextTokenSeq t = repeat_prompt_wrap("");
  TextTokenSeq span(t.begin() + 2, t.end() - 1);
  EXPECT_EQ(decode_text(span), std::string(kDefaultRepeatWrapper));
}

TEST(RepeatWrap, StrippingWrapperRecoversPrompt) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::string prompt;
    for (int i = 0; i < 1 + static_cast<int>(rng.uniform_int(12)); ++i)
      prompt.push_back(static_cast<char>(97 + rng.uniform_int(26)));
    TextTokenSeq t = repeat_prompt_wrap(prompt);
    int off = repeat_wrap_prompt_offset();
    TextTokenSeq tail(t.begin() + off, t.end() - 1);
    EXPECT_EQ(decode_text(tail), prompt);
  }
}

TEST(RepeatWrap, WrapperBytesArePrefixOfUserSpan) {
  TextTokenSeq t = repeat_prompt_wrap("abc");
  TextTokenSeq expected = encode_text(kDefaultRepeatWrapper);
  for (size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(t[2 + i], expected[i]);
}
