#include "snknock/store.hpp"

#include <fcntl.h>
#include <sqlite3.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>
#include <mutex>
#include <set>

#include "snknock/digest.hpp"
#include "snknock/error.hpp"

namespace snknock {

namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;
constexpr std::string_view kTempSuffix = ".tmp";

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta (
  key   TEXT PRIMARY KEY,
  value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS questions (
  id                 INTEGER PRIMARY KEY AUTOINCREMENT,
  email              TEXT    NOT NULL,
  questions          TEXT    NOT NULL,
  language           TEXT    NOT NULL,
  created_at         INTEGER NOT NULL,
  owner_token_sha256 TEXT
);
CREATE TABLE IF NOT EXISTS answers (
  id           INTEGER PRIMARY KEY AUTOINCREMENT,
  challenge_id INTEGER NOT NULL REFERENCES questions(id),
  audio_name   TEXT    NOT NULL UNIQUE,
  media_type   TEXT    NOT NULL,
  size_bytes   INTEGER NOT NULL,
  submitted_at INTEGER NOT NULL,
  decision     TEXT    NOT NULL,
  decided_at   INTEGER,
  notified     INTEGER NOT NULL DEFAULT 0
);
CREATE INDEX IF NOT EXISTS answers_by_challenge ON answers(challenge_id, submitted_at, id);
)sql";

[[noreturn]] void fail(const std::string& what) {
  throw Error(ErrorCode::StorageFailure, what);
}

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
      fail(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int i, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, i, v));
    return *this;
  }
  Statement& bind(int i, std::string_view v) {
    check(sqlite3_bind_text(stmt_, i, v.data(), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind_null(int i) {
    check(sqlite3_bind_null(stmt_, i));
    return *this;
  }

  /// True while a row is available.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    fail(std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }

  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
             : std::string();
  }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) fail(std::string("sqlite bind: ") + sqlite3_errmsg(db_));
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    fail("sqlite exec: " + msg);
  }
}

/// Rolls back unless commit() ran; a throwing fault hook therefore behaves
/// like a crash before commit.
class Transaction {
 public:
  explicit Transaction(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
  ~Transaction() {
    if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
  }
  void commit() {
    exec(db_, "COMMIT");
    done_ = true;
  }

 private:
  sqlite3* db_;
  bool done_ = false;
};

Timestamp from_millis(std::int64_t ms) { return Timestamp(std::chrono::milliseconds(ms)); }
std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }

AnswerRecord read_answer(const Statement& st) {
  AnswerRecord rec;
  rec.id = st.int64(0);
  rec.challenge_id = st.int64(1);
  rec.audio_name = st.text(2);
  rec.media_type = st.text(3);
  rec.size_bytes = static_cast<std::uint64_t>(st.int64(4));
  rec.submitted_at = from_millis(st.int64(5));
  rec.decision = parse_decision(st.text(6)).value_or(Decision::pending);
  if (!st.is_null(7)) rec.decided_at = from_millis(st.int64(7));
  rec.notified = st.int64(8) != 0;
  return rec;
}

constexpr const char* kAnswerColumns =
    "id, challenge_id, audio_name, media_type, size_bytes, submitted_at, decision, "
    "decided_at, notified";

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void write_durable(const fs::path& path, std::string_view bytes) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail("open " + path.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < bytes.size()) {
    const ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      fail("write " + path.string() + ": " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    fail("fsync " + path.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

}  // namespace

StoreLayout StoreLayout::under(const fs::path& data_dir) {
  return StoreLayout{data_dir, data_dir / "records.sqlite3", data_dir / "blobs"};
}

std::string blob_extension(std::string_view media_type) {
  auto base = media_type.substr(0, media_type.find(';'));
  while (!base.empty() && base.back() == ' ') base.remove_suffix(1);
  if (base == "audio/webm") return ".webm";
  if (base == "audio/ogg") return ".ogg";
  if (base == "audio/mpeg") return ".mp3";
  if (base == "audio/wav" || base == "audio/x-wav" || base == "audio/wave") return ".wav";
  if (base == "audio/mp4" || base == "audio/aac") return ".m4a";
  if (base == "audio/flac") return ".flac";
  return ".bin";
}

Store::Store(StoreOptions options)
    : options_(std::move(options)), layout_(StoreLayout::under(options_.data_dir)) {
  std::error_code ec;
  fs::create_directories(layout_.blobs_dir, ec);
  if (ec) fail("create " + layout_.blobs_dir.string() + ": " + ec.message());
  open_database();

  // Exclusive lock means no other process has this directory open, so any
  // temp file or unreferenced blob is left over from a crash.
  const auto lock_path = layout_.data_dir / ".store.lock";
  lock_fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) fail("open " + lock_path.string() + ": " + std::strerror(errno));
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) == 0) {
    recovery_ = recover();
    recovered_on_open_ = true;
  }
  ::flock(lock_fd_, LOCK_SH);
}

Store::~Store() {
  sqlite3_close(db_);
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

void Store::open_database() {
  const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
  if (sqlite3_open_v2(layout_.records_file.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    fail("open " + layout_.records_file.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec(db_, "PRAGMA journal_mode=WAL");
  exec(db_, "PRAGMA synchronous=FULL");
  exec(db_, "PRAGMA foreign_keys=ON");
  exec(db_, kSchema);

  Statement get(db_, "SELECT value FROM meta WHERE key='schema_version'");
  if (get.step()) {
    if (get.text(0) != std::to_string(kSchemaVersion))
      fail("unsupported records schema version " + get.text(0));
  } else {
    Statement put(db_, "INSERT INTO meta(key, value) VALUES('schema_version', ?)");
    put.bind(1, std::to_string(kSchemaVersion));
    put.step();
  }
}

RecoveryReport Store::recover() {
  std::unique_lock lock(mutex_);
  RecoveryReport report;

  std::set<std::string> known;
  std::vector<std::pair<std::string, std::string>> committed;
  {
    Statement st(db_, "SELECT audio_name, media_type FROM answers");
    while (st.step()) {
      known.insert(st.text(0));
      committed.emplace_back(st.text(0), st.text(1));
    }
  }

  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(layout_.blobs_dir, ec)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name.size() > kTempSuffix.size() &&
        name.compare(name.size() - kTempSuffix.size(), kTempSuffix.size(), kTempSuffix) == 0) {
      fs::remove(entry.path(), ec);
      ++report.temp_files_removed;
      continue;
    }
    if (!known.contains(entry.path().stem().string())) {
      fs::remove(entry.path(), ec);
      ++report.orphan_blobs_removed;
    }
  }
  if (ec) fail("scan " + layout_.blobs_dir.string() + ": " + ec.message());
  fsync_dir(layout_.blobs_dir);

  for (const auto& [name, media] : committed)
    if (!fs::exists(blob_path(name, media))) ++report.records_missing_blob;
  return report;
}

ChallengeRecord Store::put_challenge(ChallengeRecord record,
                                     std::optional<std::string> owner_token) {
  if (record.id) fail("challenge already has id " + std::to_string(*record.id));
  std::unique_lock lock(mutex_);
  Statement st(db_,
               "INSERT INTO questions(email, questions, language, created_at, "
               "owner_token_sha256) VALUES(?, ?, ?, ?, ?)");
  st.bind(1, record.owner_email)
      .bind(2, serialize_questions(record.question_lines))
      .bind(3, to_string(record.language))
      .bind(4, to_millis(record.created_at));
  if (owner_token)
    st.bind(5, sha256_hex(*owner_token));
  else
    st.bind_null(5);
  st.step();
  record.id = sqlite3_last_insert_rowid(db_);
  return record;
}

ChallengeRecord Store::get_challenge(std::int64_t id) const {
  std::shared_lock lock(mutex_);
  Statement st(db_,
               "SELECT id, email, questions, language, created_at FROM questions WHERE id = ?");
  st.bind(1, id);
  if (!st.step())
    throw Error(ErrorCode::NotFound, "no challenge with id " + std::to_string(id));
  ChallengeRecord rec;
  rec.id = st.int64(0);
  rec.owner_email = st.text(1);
  rec.question_lines = split_questions(st.text(2));
  rec.language = parse_language(st.text(3));
  rec.created_at = from_millis(st.int64(4));
  return rec;
}

std::vector<ChallengeRecord> Store::list_challenges() const {
  std::shared_lock lock(mutex_);
  Statement st(db_, "SELECT id, email, questions, language, created_at FROM questions ORDER BY id");
  std::vector<ChallengeRecord> out;
  while (st.step()) {
    ChallengeRecord rec;
    rec.id = st.int64(0);
    rec.owner_email = st.text(1);
    rec.question_lines = split_questions(st.text(2));
    rec.language = parse_language(st.text(3));
    rec.created_at = from_millis(st.int64(4));
    out.push_back(std::move(rec));
  }
  return out;
}

bool Store::check_owner_token(std::int64_t challenge_id, std::string_view token) const {
  std::shared_lock lock(mutex_);
  Statement st(db_, "SELECT owner_token_sha256 FROM questions WHERE id = ?");
  st.bind(1, challenge_id);
  if (!st.step() || st.is_null(0)) return false;
  return constant_time_equal(st.text(0), sha256_hex(token));
}

bool Store::challenge_exists_locked(std::int64_t id) const {
  Statement st(db_, "SELECT 1 FROM questions WHERE id = ?");
  st.bind(1, id);
  return st.step();
}

fs::path Store::blob_path(std::string_view audio_name, std::string_view media_type) const {
  return layout_.blobs_dir / (std::string(audio_name) + blob_extension(media_type));
}

AnswerRecord Store::put_answer(AnswerRecord record, const AudioBlob& blob) {
  if (record.id) fail("answer already has id " + std::to_string(*record.id));
  if (!is_valid_answer_name(record.audio_name))
    fail("invalid audio name '" + record.audio_name + "'");
  if (blob.bytes.empty()) throw Error(ErrorCode::EmptyBlob, "audio blob is empty");
  if (blob.bytes.size() > options_.max_blob_bytes)
    throw Error(ErrorCode::BlobTooLarge,
                "audio blob of " + std::to_string(blob.bytes.size()) +
                    " bytes exceeds cap of " + std::to_string(options_.max_blob_bytes));

  std::unique_lock lock(mutex_);
  if (!challenge_exists_locked(record.challenge_id))
    throw Error(ErrorCode::ChallengeNotFound,
                "no challenge with id " + std::to_string(record.challenge_id));

  record.media_type = blob.media_type;
  record.size_bytes = blob.bytes.size();
  record.decision = Decision::pending;
  record.decided_at.reset();

  const fs::path final_path = blob_path(record.audio_name, record.media_type);
  const fs::path temp_path = final_path.string() + std::string(kTempSuffix);
  if (fs::exists(final_path)) fail("blob " + final_path.string() + " already exists");

  std::error_code ec;
  try {
    write_durable(temp_path, blob.bytes);
  } catch (const Error&) {
    fs::remove(temp_path, ec);
    throw;
  }
  fault(FaultPoint::AfterTempWrite);

  fs::rename(temp_path, final_path, ec);
  if (ec) {
    fs::remove(temp_path, ec);
    fail("rename blob: " + ec.message());
  }
  fsync_dir(layout_.blobs_dir);
  fault(FaultPoint::AfterBlobRename);

  try {
    Transaction tx(db_);
    Statement st(db_,
                 "INSERT INTO answers(challenge_id, audio_name, media_type, size_bytes, "
                 "submitted_at, decision, decided_at, notified) "
                 "VALUES(?, ?, ?, ?, ?, 'pending', NULL, ?)");
    st.bind(1, record.challenge_id)
        .bind(2, record.audio_name)
        .bind(3, record.media_type)
        .bind(4, static_cast<std::int64_t>(record.size_bytes))
        .bind(5, to_millis(record.submitted_at))
        .bind(6, std::int64_t{record.notified ? 1 : 0});
    st.step();
    record.id = sqlite3_last_insert_rowid(db_);
    fault(FaultPoint::BeforeCommit);
    tx.commit();
  } catch (const Error&) {
    fs::remove(final_path, ec);
    throw;
  }
  return record;
}

std::optional<AnswerRecord> Store::find_answer_locked(std::int64_t id) const {
  Statement st(db_, (std::string("SELECT ") + kAnswerColumns + " FROM answers WHERE id = ?").c_str());
  st.bind(1, id);
  if (!st.step()) return std::nullopt;
  return read_answer(st);
}

AnswerRecord Store::get_answer(std::int64_t id) const {
  std::shared_lock lock(mutex_);
  auto rec = find_answer_locked(id);
  if (!rec) throw Error(ErrorCode::NotFound, "no answer with id " + std::to_string(id));
  return *rec;
}

AudioBlob Store::get_blob(std::string_view audio_name) const {
  std::shared_lock lock(mutex_);
  Statement st(db_, "SELECT media_type FROM answers WHERE audio_name = ?");
  st.bind(1, audio_name);
  if (!st.step())
    throw Error(ErrorCode::NotFound, "no audio named '" + std::string(audio_name) + "'");
  AudioBlob blob;
  blob.media_type = st.text(0);
  const auto path = blob_path(audio_name, blob.media_type);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("blob file missing for '" + std::string(audio_name) + "'");
  blob.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return blob;
}

std::vector<AnswerRecord> Store::list_answers(std::int64_t challenge_id) const {
  std::shared_lock lock(mutex_);
  if (!challenge_exists_locked(challenge_id))
    throw Error(ErrorCode::ChallengeNotFound,
                "no challenge with id " + std::to_string(challenge_id));
  Statement st(db_, (std::string("SELECT ") + kAnswerColumns +
                     " FROM answers WHERE challenge_id = ? ORDER BY submitted_at, id")
                        .c_str());
  st.bind(1, challenge_id);
  std::vector<AnswerRecord> out;
  while (st.step()) out.push_back(read_answer(st));
  return out;
}

void Store::update_answer_decision(const AnswerRecord& record) {
  if (!record.id) throw Error(ErrorCode::NotFound, "answer has no id");
  std::unique_lock lock(mutex_);
  Transaction tx(db_);
  auto current = find_answer_locked(*record.id);
  if (!current) throw Error(ErrorCode::NotFound, "no answer with id " + std::to_string(*record.id));
  if (current->decision != Decision::pending || record.decision == Decision::pending ||
      !record.decided_at)
    throw Error(ErrorCode::InvalidTransition,
                "cannot move answer " + std::to_string(*record.id) + " from " +
                    std::string(to_string(current->decision)) + " to " +
                    std::string(to_string(record.decision)));
  Statement st(db_, "UPDATE answers SET decision = ?, decided_at = ? WHERE id = ?");
  st.bind(1, to_string(record.decision)).bind(2, to_millis(*record.decided_at)).bind(3, *record.id);
  st.step();
  tx.commit();
}

void Store::set_notified(std::int64_t answer_id, bool notified) {
  std::unique_lock lock(mutex_);
  Statement st(db_, "UPDATE answers SET notified = ? WHERE id = ?");
  st.bind(1, std::int64_t{notified ? 1 : 0}).bind(2, answer_id);
  st.step();
  if (sqlite3_changes(db_) == 0)
    throw Error(ErrorCode::NotFound, "no answer with id " + std::to_string(answer_id));
}

}  // namespace snknock
