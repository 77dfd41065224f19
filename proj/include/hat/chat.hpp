#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace hat {

struct ChatMessage {
  std::string role;  // "system", "user", or "assistant"
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

// Chat-completion contract: a message list in, assistant text out.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages) = 0;
};

// One scripted reply. When expect is non-empty the incoming request's last
// user message must contain it, which keeps replayed fixtures honest.
struct MockScriptEntry {
  std::string expect;
  std::string reply;
};

// Replays an ordered script; raises DataError on exhaustion or an
// expectation miss. Records every request for inspection.
class MockChatClient : public ChatClient {
 public:
  explicit MockChatClient(std::vector<MockScriptEntry> script);

  // Fixture layout: {"script": [{"expect": "...", "reply": "..."}, ...]}
  static MockChatClient from_file(const std::string& path);

  std::string complete(const std::vector<ChatMessage>& messages) override;

  std::size_t calls() const { return next_; }
  const std::vector<std::vector<ChatMessage>>& requests() const {
    return requests_;
  }

 private:
  std::vector<MockScriptEntry> script_;
  std::size_t next_ = 0;
  std::vector<std::vector<ChatMessage>> requests_;
};

// Reads a whole text file; DataError when unreadable.
std::string load_text_file(const std::string& path);

// Fills {name} placeholders. Every placeholder in the template must have a
// value; unused values are fine. Substituted text is never re-scanned.
std::string render_template(const std::string& tpl,
                            const std::map<std::string, std::string>& vars);

// Splits "### system" / "### user" / "### assistant" sections into messages.
// Content outside a section or an unknown role is a DataError.
std::vector<ChatMessage> parse_chat_template(const std::string& text);

// Loads and splits the template, then fills placeholders per section, so
// substituted values can never introduce new sections.
std::vector<ChatMessage> load_chat_template(
    const std::string& path, const std::map<std::string, std::string>& vars);

}  // namespace hat
