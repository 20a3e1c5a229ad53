package bank;

public class Account {
    private final String owner;
    private long balance;
    private int ops = 0;

    public Account(String owner, long opening) {
        this.owner = owner;
        balance = opening;
    }

    public long getBalance() {
        return balance;
    }

    public String getOwner() {
        return owner;
    }

    public void deposit(long amount) {
        if (amount <= 0) {
            throw new IllegalArgumentException("amount");
        }
        balance += amount;
        ops++;
    }

    public boolean withdraw(long amount) {
        if (amount > balance) {
            return false;
        }
        this.balance = this.balance - amount;
        ops++;
        return true;
    }
}
